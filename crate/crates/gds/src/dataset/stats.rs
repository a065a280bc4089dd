use std::fmt::Write as _;

use super::DatasetIndex;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinSpec {
    /// Number of log2 area bins; the last one is open-ended.
    pub area_bins: u32,
    /// Objects-per-image bins run `0..max_objects`, then `max_objects+`.
    pub max_objects: u32,
}

impl Default for BinSpec {
    fn default() -> Self {
        Self {
            area_bins: 24,
            max_objects: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram {
    pub name: &'static str,
    /// Inclusive lower edge of each bin.
    pub lower: Vec<u64>,
    pub counts: Vec<u64>,
    pub open_ended: bool,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Index of the most populated bin, lowest on ties. `None` when empty.
    pub fn mode_bin(&self) -> Option<usize> {
        let max = *self.counts.iter().max()?;
        (max > 0).then(|| self.counts.iter().position(|&c| c == max).unwrap())
    }

    /// Highest non-empty bin.
    pub fn max_bin(&self) -> Option<usize> {
        self.counts.iter().rposition(|&c| c > 0)
    }

    /// Bins strictly higher than both neighbours.
    pub fn peaks(&self) -> Vec<usize> {
        let c = &self.counts;
        (0..c.len())
            .filter(|&i| c[i] > 0 && (i == 0 || c[i] > c[i - 1]) && (i + 1 == c.len() || c[i] > c[i + 1]))
            .collect()
    }

    pub fn label(&self, i: usize) -> String {
        let lo = self.lower[i];
        match self.lower.get(i + 1) {
            Some(&hi) if hi == lo + 1 => lo.to_string(),
            Some(&hi) => format!("[{lo}, {hi})"),
            None if self.open_ended => format!("{lo}+"),
            None => lo.to_string(),
        }
    }

    fn log2(name: &'static str, bins: u32) -> Self {
        Self {
            name,
            lower: (0..bins).map(|i| 1u64 << i).collect(),
            counts: vec![0; bins as usize],
            open_ended: true,
        }
    }

    fn add_area(&mut self, area: u64) {
        // bin i holds [2^i, 2^(i+1)); the last bin absorbs the rest
        let i = (63 - area.max(1).leading_zeros()) as usize;
        let last = self.counts.len() - 1;
        self.counts[i.min(last)] += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatsReport {
    pub images: u64,
    pub boxes: u64,
    /// Records or boxes left out because their geometry is invalid.
    pub skipped_images: u64,
    pub skipped_boxes: u64,
    pub image_area: Histogram,
    pub box_area: Histogram,
    pub objects_per_image: Histogram,
}

/// Histograms over annotated detector gun records. Only objects named
/// `gun` are counted.
pub fn compute_stats(index: &DatasetIndex, bins: BinSpec) -> StatsReport {
    let area_bins = bins.area_bins.clamp(1, 63);
    let mut image_area = Histogram::log2("image_area", area_bins);
    let mut box_area = Histogram::log2("box_area", area_bins);
    let max_obj = bins.max_objects.max(1);
    let mut objects = Histogram {
        name: "objects_per_image",
        lower: (0..=u64::from(max_obj)).collect(),
        counts: vec![0; max_obj as usize + 1],
        open_ended: true,
    };
    let (mut images, mut boxes, mut skipped_images, mut skipped_boxes) = (0, 0, 0, 0);

    for (_, rec) in index.annotated() {
        let Some(size) = rec.frame_size() else {
            skipped_images += 1;
            continue;
        };
        images += 1;
        image_area.add_area(size.area());
        let mut n = 0u64;
        for o in rec.gun_objects() {
            match o.bounding_box() {
                Ok(b) if b.fits_within(size) => {
                    boxes += 1;
                    n += 1;
                    box_area.add_area(b.area());
                }
                _ => skipped_boxes += 1,
            }
        }
        objects.counts[n.min(u64::from(max_obj)) as usize] += 1;
    }

    StatsReport {
        images,
        boxes,
        skipped_images,
        skipped_boxes,
        image_area,
        box_area,
        objects_per_image: objects,
    }
}

impl StatsReport {
    fn histograms(&self) -> [(&Histogram, &'static str); 3] {
        [
            (&self.image_area, "whole image area (pixels)"),
            (&self.box_area, "gun box area (pixels)"),
            (&self.objects_per_image, "guns per image"),
        ]
    }

    /// Aligned, human-readable rendering with one section per histogram.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "images {}  boxes {}", self.images, self.boxes);
        if self.skipped_images + self.skipped_boxes > 0 {
            let _ = writeln!(out, "skipped images {}  skipped boxes {}", self.skipped_images, self.skipped_boxes);
        }
        for (h, title) in self.histograms() {
            let _ = writeln!(out, "\n{title}");
            let labels: Vec<String> = (0..h.counts.len()).map(|i| h.label(i)).collect();
            let width = labels.iter().map(String::len).max().unwrap_or(0).max(3);
            let _ = writeln!(out, "{:<width$}  {:>8}", "bin", "count");
            for (label, c) in labels.iter().zip(&h.counts) {
                let _ = writeln!(out, "{label:<width$}  {c:>8}");
            }
        }
        out
    }

    /// One `key<TAB>value` per line.
    pub fn render_kv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "images\t{}", self.images);
        let _ = writeln!(out, "boxes\t{}", self.boxes);
        let _ = writeln!(out, "skipped_images\t{}", self.skipped_images);
        let _ = writeln!(out, "skipped_boxes\t{}", self.skipped_boxes);
        for (h, _) in self.histograms() {
            for (i, c) in h.counts.iter().enumerate() {
                let _ = writeln!(out, "{}.{}\t{}", h.name, h.label(i).replace(' ', ""), c);
            }
        }
        let o = &self.objects_per_image;
        if let (Some(mode), Some(max)) = (o.mode_bin(), o.max_bin()) {
            let _ = writeln!(out, "objects_per_image.mode\t{}", o.label(mode));
            let _ = writeln!(out, "objects_per_image.max\t{}", o.label(max));
        }
        out
    }
}
