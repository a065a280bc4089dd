//! Greedy IoU tracker and the repeated-classification confirmation rule.

use alloc::vec;
use alloc::vec::Vec;

use crate::backend::Detection;
use crate::config::PipelineConfig;
use crate::geometry::{iou, BoundingBox};

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub track_id: u64,
    /// Latest matched box, full-resolution coordinates.
    pub bbox: BoundingBox,
    /// Score of the detection that last updated this track.
    pub last_score: f64,
    pub age_since_update: u32,
    pub positive_classifications: u32,
    pub confirmed: bool,
    pub reported: bool,
}

impl Track {
    pub fn new(track_id: u64, detection: &Detection) -> Self {
        Self {
            track_id,
            bbox: detection.bbox,
            last_score: detection.score,
            age_since_update: 0,
            positive_classifications: 0,
            confirmed: false,
            reported: false,
        }
    }
}

/// Result of one association step.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Association {
    /// Ids of tracks touched by a detection this step, in processing order.
    pub updated: Vec<u64>,
    /// How many of those were created this step.
    pub spawned: usize,
    pub dropped: Vec<u64>,
}

/// Live tracks plus the id counter. Ids are never reused.
#[derive(Debug, Clone, Default)]
pub struct Tracker {
    tracks: Vec<Track>,
    next_id: u64,
}

impl Tracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn get(&self, track_id: u64) -> Option<&Track> {
        self.tracks.iter().find(|t| t.track_id == track_id)
    }

    pub fn get_mut(&mut self, track_id: u64) -> Option<&mut Track> {
        self.tracks.iter_mut().find(|t| t.track_id == track_id)
    }

    pub fn tracks_created(&self) -> u64 {
        self.next_id
    }

    /// Greedy association in descending detection score.
    ///
    /// Each detection takes the not-yet-matched track with the highest IoU at
    /// or above the threshold (earliest track wins ties). Unmatched detections
    /// start new tracks; unmatched tracks age by one and are dropped once
    /// their age exceeds `track_max_age`.
    pub fn associate(&mut self, detections: &[Detection], cfg: &PipelineConfig) -> Association {
        let mut order: Vec<usize> = (0..detections.len()).collect();
        order.sort_by(|&a, &b| detections[b].score.total_cmp(&detections[a].score));

        let existing = self.tracks.len();
        let mut matched = vec![false; existing];
        let mut out = Association::default();

        for di in order {
            let det = &detections[di];
            let mut best: Option<(usize, f64)> = None;
            for (ti, track) in self.tracks[..existing].iter().enumerate() {
                if matched[ti] {
                    continue;
                }
                let v = iou(&track.bbox, &det.bbox);
                if v >= cfg.iou_match_threshold && best.is_none_or(|(_, b)| v > b) {
                    best = Some((ti, v));
                }
            }
            match best {
                Some((ti, _)) => {
                    matched[ti] = true;
                    let track = &mut self.tracks[ti];
                    track.bbox = det.bbox;
                    track.last_score = det.score;
                    track.age_since_update = 0;
                    out.updated.push(track.track_id);
                }
                None => {
                    let id = self.next_id;
                    self.next_id += 1;
                    self.tracks.push(Track::new(id, det));
                    out.updated.push(id);
                    out.spawned += 1;
                }
            }
        }

        for (ti, track) in self.tracks[..existing].iter_mut().enumerate() {
            if !matched[ti] {
                track.age_since_update += 1;
            }
        }
        let max_age = cfg.track_max_age;
        self.tracks.retain(|t| {
            let keep = t.age_since_update <= max_age;
            if !keep {
                out.dropped.push(t.track_id);
            }
            keep
        });
        out
    }

    /// Ages every track by one frame without any detections.
    pub fn age_all(&mut self, cfg: &PipelineConfig) -> Association {
        self.associate(&[], cfg)
    }
}

/// Applies one classification to a track. Returns `true` exactly once per
/// track: on the call that brings its positive count to `confirm_count`.
pub fn confirm_step(track: &mut Track, score: f64, cfg: &PipelineConfig) -> bool {
    if score >= cfg.classifier_threshold {
        track.positive_classifications += 1;
    } else if cfg.reset_on_negative && !track.confirmed {
        track.positive_classifications = 0;
    }
    if !track.reported && track.positive_classifications >= cfg.confirm_count {
        track.confirmed = true;
        track.reported = true;
        return true;
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(a: u32, b: u32, c: u32, d: u32, score: f64) -> Detection {
        Detection::gun(BoundingBox::new(a, b, c, d).unwrap(), score)
    }

    #[test]
    fn first_detection_spawns_track() {
        let mut t = Tracker::new();
        let a = t.associate(&[det(0, 0, 10, 10, 0.9)], &PipelineConfig::default());
        assert_eq!(a.updated, [0]);
        assert_eq!(a.spawned, 1);
        assert_eq!(t.tracks().len(), 1);
        assert_eq!(t.tracks()[0].track_id, 0);
    }

    #[test]
    fn overlapping_detection_continues_track() {
        let cfg = PipelineConfig::default();
        let mut t = Tracker::new();
        t.associate(&[det(0, 0, 20, 10, 0.9)], &cfg);
        t.age_all(&cfg);
        assert_eq!(t.tracks()[0].age_since_update, 1);
        // 150 shared cells over 250 covered cells
        let next = det(5, 0, 25, 10, 0.8);
        assert!((iou(&t.tracks()[0].bbox, &next.bbox) - 0.6).abs() < 1e-12);
        let a = t.associate(&[next], &cfg);
        assert_eq!(a.updated, [0]);
        assert_eq!(a.spawned, 0);
        assert_eq!(t.tracks()[0].age_since_update, 0);
        assert_eq!(t.tracks()[0].bbox, next.bbox);
        assert_eq!(t.tracks()[0].last_score, 0.8);
    }

    #[test]
    fn disjoint_detection_spawns_second_track() {
        let cfg = PipelineConfig::default();
        let mut t = Tracker::new();
        t.associate(&[det(0, 0, 10, 10, 0.9)], &cfg);
        let a = t.associate(&[det(50, 50, 60, 60, 0.9)], &cfg);
        assert_eq!(a.spawned, 1);
        assert_eq!(t.tracks().len(), 2);
        assert_eq!(t.get(0).unwrap().age_since_update, 1);
        assert_eq!(t.get(1).unwrap().age_since_update, 0);
    }

    #[test]
    fn higher_score_claims_track_first() {
        let cfg = PipelineConfig::default();
        let mut t = Tracker::new();
        t.associate(&[det(0, 0, 10, 10, 0.9)], &cfg);
        // both overlap the track; the 0.95 detection is processed first even
        // though its IoU is lower
        let a = t.associate(&[det(0, 0, 10, 10, 0.5), det(0, 0, 10, 14, 0.95)], &cfg);
        assert_eq!(a.updated, [0, 1]);
        assert_eq!(t.get(0).unwrap().bbox, BoundingBox::new(0, 0, 10, 14).unwrap());
        assert_eq!(t.get(1).unwrap().bbox, BoundingBox::new(0, 0, 10, 10).unwrap());
    }

    #[test]
    fn stale_tracks_are_dropped() {
        let cfg = PipelineConfig {
            track_max_age: 2,
            ..Default::default()
        };
        let mut t = Tracker::new();
        t.associate(&[det(0, 0, 10, 10, 0.9)], &cfg);
        assert!(t.age_all(&cfg).dropped.is_empty());
        assert!(t.age_all(&cfg).dropped.is_empty());
        assert_eq!(t.age_all(&cfg).dropped, [0]);
        assert!(t.tracks().is_empty());
        // ids keep counting after a drop
        t.associate(&[det(0, 0, 10, 10, 0.9)], &cfg);
        assert_eq!(t.tracks()[0].track_id, 1);
    }

    fn fresh() -> Track {
        Track::new(0, &det(0, 0, 4, 4, 1.0))
    }

    #[test]
    fn fires_on_third_positive() {
        let cfg = PipelineConfig::default();
        let mut tr = fresh();
        assert!(!confirm_step(&mut tr, 0.9, &cfg));
        assert!(!confirm_step(&mut tr, 0.9, &cfg));
        assert!(confirm_step(&mut tr, 0.9, &cfg));
        assert!(tr.confirmed && tr.reported);
        assert!(!confirm_step(&mut tr, 0.9, &cfg));
        assert_eq!(tr.positive_classifications, 4);
    }

    #[test]
    fn negatives_do_not_reset_by_default() {
        let cfg = PipelineConfig::default();
        let mut tr = fresh();
        confirm_step(&mut tr, 0.9, &cfg);
        confirm_step(&mut tr, 0.2, &cfg);
        assert!(!confirm_step(&mut tr, 0.9, &cfg));
        assert_eq!(tr.positive_classifications, 2);
        assert!(confirm_step(&mut tr, 0.5, &cfg));
    }

    #[test]
    fn reset_on_negative_when_enabled() {
        let cfg = PipelineConfig {
            reset_on_negative: true,
            ..Default::default()
        };
        let mut tr = fresh();
        confirm_step(&mut tr, 0.9, &cfg);
        confirm_step(&mut tr, 0.9, &cfg);
        confirm_step(&mut tr, 0.1, &cfg);
        assert_eq!(tr.positive_classifications, 0);
    }
}
