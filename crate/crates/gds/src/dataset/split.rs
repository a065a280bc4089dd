use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Category, DatasetIndex, Stage};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SplitError {
    #[error("test fraction {0} must lie strictly between 0 and 1")]
    Fraction(f64),
    #[error("cannot stratify: category {0} has {1} item(s), need at least 2")]
    TooFew(&'static str, usize),
}

/// Image paths relative to the dataset root, each list sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitResult {
    pub train: Vec<PathBuf>,
    pub test: Vec<PathBuf>,
}

/// Stratified random split of the images of one stage. Each category
/// contributes `round(n * test_fraction)` test items, clamped to `1..n`.
/// Categories with no images are skipped.
pub fn split(index: &DatasetIndex, stage: Stage, test_fraction: f64, seed: u64) -> Result<SplitResult, SplitError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(SplitError::Fraction(test_fraction));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for category in [Category::Gun, Category::Other] {
        // entries are path-sorted, so the input order is already canonical
        let mut items: Vec<PathBuf> = index.entries_in(stage, category).map(|e| e.path.clone()).collect();
        let n = items.len();
        if n == 0 {
            continue;
        }
        if n < 2 {
            return Err(SplitError::TooFew(category.dir_name(), n));
        }
        let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
        items.shuffle(&mut rng);
        test.extend(items.drain(..n_test));
        train.extend(items);
    }
    train.sort();
    test.sort();
    Ok(SplitResult { train, test })
}

/// Writes `train.txt` and `test.txt`, one relative path per line.
pub fn write_manifests(result: &SplitResult, dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let render = |v: &[PathBuf]| v.iter().map(|p| format!("{}\n", p.display())).collect::<String>();
    std::fs::write(dir.join("train.txt"), render(&result.train))?;
    std::fs::write(dir.join("test.txt"), render(&result.test))
}
