use std::path::Path;

use gds_core::crop_and_resize;

use super::{DatasetError, DatasetIndex, Finding, FindingKind, ImageEntry};
use crate::imaging;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ChipReport {
    pub written: usize,
    pub findings: Vec<Finding>,
}

/// `<split>_<stem>_<k>.jpg`, or `<stem>_<k>.jpg` outside a split; `k` is
/// the object's position in the annotation.
pub fn chip_file_name(entry: &ImageEntry, k: usize) -> String {
    match &entry.split {
        Some(s) => format!("{}_{}_{k:02}.jpg", s.replace('/', "_"), entry.stem()),
        None => format!("{}_{k:02}.jpg", entry.stem()),
    }
}

/// Crops every ground-truth gun box into `out` as a `size`×`size` JPEG.
pub fn extract_chips(index: &DatasetIndex, out: &Path, size: u32) -> Result<ChipReport, DatasetError> {
    let io = |source| DatasetError::Io {
        path: out.to_path_buf(),
        source,
    };
    std::fs::create_dir_all(out).map_err(io)?;
    if size == 0 {
        return Err(DatasetError::ChipSize);
    }
    let mut report = ChipReport::default();
    for (entry, rec) in index.annotated() {
        let image = match imaging::load(&index.root.join(&entry.path)) {
            Ok(i) => i,
            Err(e) => {
                report.findings.push(Finding {
                    path: entry.path.clone(),
                    kind: FindingKind::UnreadableFile,
                    detail: e.to_string(),
                });
                continue;
            }
        };
        for (k, o) in rec.objects.iter().enumerate().filter(|(_, o)| o.is_gun()) {
            let bbox = match o.bounding_box() {
                Ok(b) if b.fits_within(image.size()) => b,
                Ok(_) => {
                    report.findings.push(Finding {
                        path: entry.path.clone(),
                        kind: FindingKind::BoxOutOfBounds,
                        detail: format!("object {k} outside decoded image {}", image.size()),
                    });
                    continue;
                }
                Err(e) => {
                    report.findings.push(Finding {
                        path: entry.path.clone(),
                        kind: FindingKind::DegenerateBox,
                        detail: format!("object {k}: {e}"),
                    });
                    continue;
                }
            };
            let chip = crop_and_resize(&image, &bbox, size).expect("box checked against image");
            let dest = out.join(chip_file_name(entry, k));
            imaging::save_jpeg(&chip, &dest).map_err(|source| DatasetError::Image { path: dest.clone(), source })?;
            report.written += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::super::testing::*;
    use super::super::*;
    use super::*;
    use sha2::{Digest, Sha256};

    fn tree_hash(dir: &Path) -> Vec<(String, String)> {
        let mut v: Vec<_> = std::fs::read_dir(dir)
            .unwrap()
            .map(|e| {
                let p = e.unwrap().path();
                let h = hex::encode(Sha256::digest(std::fs::read(&p).unwrap()));
                (p.file_name().unwrap().to_string_lossy().into_owned(), h)
            })
            .collect();
        v.sort();
        v
    }

    #[test]
    fn one_chip_per_box_and_deterministic() {
        let d = tempfile::tempdir().unwrap();
        mini_tree(d.path());
        let idx = scan_dataset(d.path()).unwrap();
        let out1 = d.path().join("chips1");
        let out2 = d.path().join("chips2");
        let r = extract_chips(&idx, &out1, 112).unwrap();
        assert_eq!(r.written, 5);
        assert!(r.findings.is_empty());
        extract_chips(&idx, &out2, 112).unwrap();
        let h1 = tree_hash(&out1);
        assert_eq!(h1, tree_hash(&out2));
        assert_eq!(h1.iter().map(|x| x.0.as_str()).collect::<Vec<_>>(), ["a_00.jpg", "b_00.jpg", "b_01.jpg", "c_00.jpg", "c_01.jpg"]);
        for (name, _) in &h1 {
            let chip = crate::imaging::load(&out1.join(name)).unwrap();
            assert_eq!((chip.width(), chip.height()), (112, 112));
        }
    }

    #[test]
    fn whole_image_box_is_resized_image() {
        let d = tempfile::tempdir().unwrap();
        write_pair(d.path(), "detector/gun", "w", 112, 112, &[[0, 0, 112, 112]]);
        let idx = scan_dataset(d.path()).unwrap();
        let out = d.path().join("chips");
        extract_chips(&idx, &out, 112).unwrap();
        let src = crate::imaging::load(&d.path().join("detector/gun/JpegImages/w.jpg")).unwrap();
        let chip = crate::imaging::load(&out.join("w_00.jpg")).unwrap();
        // re-encoding a flat image is lossless enough to compare exactly
        assert_eq!(src.as_bytes(), chip.as_bytes());
    }

    #[test]
    fn unreadable_image_becomes_finding() {
        let d = tempfile::tempdir().unwrap();
        mini_tree(d.path());
        std::fs::write(d.path().join("detector/gun/JpegImages/a.jpg"), b"not a jpeg").unwrap();
        let idx = scan_dataset(d.path()).unwrap();
        let r = extract_chips(&idx, &d.path().join("chips"), 112).unwrap();
        assert_eq!(r.written, 4);
        assert_eq!(r.findings[0].kind, FindingKind::UnreadableFile);
    }
}
