use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{name} must lie in (0, 1], got {value}")]
    Ratio { name: &'static str, value: f64 },
    #[error("{name} must be at least 1")]
    Zero { name: &'static str },
}

/// Tunables for the edge pipeline and the shared decision thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Minimum IoU for a detection to continue an existing track.
    pub iou_match_threshold: f64,
    /// A chip counts as a positive classification when its score reaches this.
    pub classifier_threshold: f64,
    /// Positive classifications needed before a track fires.
    pub confirm_count: u32,
    /// Side of the square chip handed to the classifier.
    pub chip_size: u32,
    /// Frames are shrunk by this divisor before detection.
    pub detect_scale: u32,
    pub motion_fraction_threshold: f64,
    pub motion_pixel_delta: u8,
    /// Tracks unmatched for more than this many frames are dropped.
    pub track_max_age: u32,
    /// Run the detector on every n-th motion-active frame.
    pub detect_stride: u32,
    /// Clear a track's positive count whenever a chip scores below threshold.
    pub reset_on_negative: bool,
    /// Capacity of the undelivered-event queue; the oldest event is dropped on overflow.
    pub queue_capacity: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            iou_match_threshold: 0.3,
            classifier_threshold: 0.5,
            confirm_count: 3,
            chip_size: 112,
            detect_scale: 4,
            motion_fraction_threshold: 0.005,
            motion_pixel_delta: 25,
            track_max_age: 10,
            detect_stride: 1,
            reset_on_negative: false,
            queue_capacity: 64,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let ratios = [
            ("iou_match_threshold", self.iou_match_threshold),
            ("classifier_threshold", self.classifier_threshold),
            ("motion_fraction_threshold", self.motion_fraction_threshold),
        ];
        for (name, value) in ratios {
            if !(value > 0.0 && value <= 1.0) {
                return Err(ConfigError::Ratio { name, value });
            }
        }
        let counts = [
            ("confirm_count", self.confirm_count),
            ("chip_size", self.chip_size),
            ("detect_scale", self.detect_scale),
            ("detect_stride", self.detect_stride),
        ];
        for (name, value) in counts {
            if value == 0 {
                return Err(ConfigError::Zero { name });
            }
        }
        if self.queue_capacity == 0 {
            return Err(ConfigError::Zero { name: "queue_capacity" });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = PipelineConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.iou_match_threshold, 0.3);
        assert_eq!(cfg.classifier_threshold, 0.5);
        assert_eq!(cfg.confirm_count, 3);
        assert_eq!(cfg.chip_size, 112);
    }

    #[test]
    fn rejects_out_of_range() {
        let cfg = PipelineConfig {
            iou_match_threshold: 0.0,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(ConfigError::Ratio { name: "iou_match_threshold", .. })));
        let cfg = PipelineConfig {
            classifier_threshold: f64::NAN,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = PipelineConfig {
            confirm_count: 0,
            ..Default::default()
        };
        assert_eq!(cfg.validate(), Err(ConfigError::Zero { name: "confirm_count" }));
    }
}
