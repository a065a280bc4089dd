//! Seeded synthetic dataset trees for tests and demos.

use std::path::Path;

use gds_core::{BoundingBox, FrameSize, Image, PixelFormat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{serialize_annotation, AnnotatedObject, AnnotationRecord, CategoryCounts, DatasetError};
use crate::imaging;

#[derive(Debug, Clone, PartialEq)]
pub struct GunImage {
    pub stem: String,
    pub size: FrameSize,
    pub boxes: Vec<BoundingBox>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TreeSpec {
    pub detector_gun: Vec<GunImage>,
    pub detector_other: Vec<FrameSize>,
    pub classifier_gun: Vec<FrameSize>,
    pub classifier_other: Vec<FrameSize>,
}

fn random_size(rng: &mut ChaCha8Rng) -> FrameSize {
    FrameSize::new(rng.gen_range(48..=320), rng.gen_range(32..=240)).expect("nonzero")
}

pub fn random_box(rng: &mut ChaCha8Rng, size: FrameSize) -> BoundingBox {
    let w = rng.gen_range(4..=size.width().min(96));
    let h = rng.gen_range(4..=size.height().min(96));
    let x = rng.gen_range(0..=size.width() - w);
    let y = rng.gen_range(0..=size.height() - h);
    BoundingBox::new(x, y, x + w, y + h).expect("nondegenerate")
}

impl TreeSpec {
    /// `gun` annotated images with 1 to 4 boxes each, plus plain images.
    pub fn random(seed: u64, gun: usize, other: usize, classifier_gun: usize, classifier_other: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let detector_gun = (0..gun)
            .map(|i| {
                let size = random_size(&mut rng);
                let n = rng.gen_range(1..=4);
                GunImage {
                    stem: format!("g{i:04}"),
                    size,
                    boxes: (0..n).map(|_| random_box(&mut rng, size)).collect(),
                }
            })
            .collect();
        let mut sizes = |n: usize| (0..n).map(|_| random_size(&mut rng)).collect::<Vec<_>>();
        Self {
            detector_gun,
            detector_other: sizes(other),
            classifier_gun: sizes(classifier_gun),
            classifier_other: sizes(classifier_other),
        }
    }

    pub fn counts(&self) -> CategoryCounts {
        CategoryCounts {
            detector_gun: self.detector_gun.len(),
            detector_other: self.detector_other.len(),
            classifier_gun: self.classifier_gun.len(),
            classifier_other: self.classifier_other.len(),
        }
    }

    pub fn box_count(&self) -> usize {
        self.detector_gun.iter().map(|g| g.boxes.len()).sum()
    }

    pub fn write(&self, root: &Path) -> Result<(), DatasetError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| DatasetError::Io { path, source }
        };
        let save = |img: &Image, path: &Path| {
            std::fs::create_dir_all(path.parent().expect("has parent")).map_err(io(path))?;
            imaging::save_jpeg(img, path).map_err(|source| DatasetError::Image {
                path: path.to_path_buf(),
                source,
            })
        };
        for g in &self.detector_gun {
            let mut img = Image::filled(g.size, PixelFormat::Rgb8, 70);
            for b in &g.boxes {
                img.fill_region(b, [200, 40, 40]).expect("box inside image");
            }
            save(&img, &root.join(format!("detector/gun/JpegImages/{}.jpg", g.stem)))?;
            let rec = AnnotationRecord {
                filename: format!("{}.jpg", g.stem),
                width: g.size.width().into(),
                height: g.size.height().into(),
                depth: 3,
                objects: g.boxes.iter().map(|b| AnnotatedObject::new("gun", *b)).collect(),
            };
            let xml = root.join(format!("detector/gun/Annotations/{}.xml", g.stem));
            std::fs::create_dir_all(xml.parent().expect("has parent")).map_err(io(&xml))?;
            std::fs::write(&xml, serialize_annotation(&rec)).map_err(io(&xml))?;
        }
        for (dir, sizes, value) in [
            ("detector/other", &self.detector_other, 110),
            ("classifier/gun", &self.classifier_gun, 150),
            ("classifier/other", &self.classifier_other, 30),
        ] {
            for (i, s) in sizes.iter().enumerate() {
                save(&Image::filled(*s, PixelFormat::Rgb8, value), &root.join(format!("{dir}/i{i:04}.jpg")))?;
            }
        }
        Ok(())
    }
}
