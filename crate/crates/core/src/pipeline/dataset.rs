//! Class-per-directory datasets, their codestream archives and splits.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::codestream::{encode, CodeblockGrid};
use crate::io::{read_image, write_codestream};
use crate::wavelet::decompose;

const IMAGE_EXTENSIONS: [&str; 5] = ["png", "ppm", "pgm", "pnm", "wcs"];

/// Sub-directory of a dataset root holding transcoded archives.
pub const CACHE_DIR: &str = ".wcs-cache";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: usize,
}

/// Images found under a dataset root, labelled by directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    /// Class names, sorted; a label indexes this list.
    pub classes: Vec<String>,
    pub entries: Vec<ManifestEntry>,
}

fn sorted_dir(dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| PipelineError::Dataset(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            !p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with('.'))
        })
        .collect();
    out.sort();
    Ok(out)
}

/// Scan `root/<class>/<image>`; classes and files are sorted by name.
pub fn scan_dataset(root: &Path) -> Result<Manifest, PipelineError> {
    let mut classes = Vec::new();
    let mut entries = Vec::new();
    for dir in sorted_dir(root)?.into_iter().filter(|p| p.is_dir()) {
        let label = classes.len();
        let before = entries.len();
        for path in sorted_dir(&dir)? {
            let ext = path
                .extension()
                .and_then(|e| e.to_str())
                .unwrap_or("")
                .to_ascii_lowercase();
            if path.is_file() && IMAGE_EXTENSIONS.contains(&ext.as_str()) {
                entries.push(ManifestEntry { path, label });
            }
        }
        if entries.len() == before {
            return Err(PipelineError::EmptyClass(dir));
        }
        classes.push(dir.file_name().unwrap().to_string_lossy().into_owned());
    }
    if classes.is_empty() {
        return Err(PipelineError::Dataset(format!("no class directories under {}", root.display())));
    }
    Ok(Manifest { classes, entries })
}

/// Item indices of the three splits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl SplitName {
    pub fn name(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Val => "val",
            SplitName::Test => "test",
        }
    }
}

impl std::str::FromStr for SplitName {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(SplitName::Train),
            "val" | "validation" => Ok(SplitName::Val),
            "test" => Ok(SplitName::Test),
            _ => Err(PipelineError::Config(format!("unknown split {s:?}"))),
        }
    }
}

impl Split {
    pub fn get(&self, name: SplitName) -> &[usize] {
        match name {
            SplitName::Train => &self.train,
            SplitName::Val => &self.val,
            SplitName::Test => &self.test,
        }
    }
}

pub const DEFAULT_FRACTIONS: [f64; 3] = [0.8, 0.1, 0.1];

/// Random split of `n` items. Train and validation sizes are rounded
/// down; the test split takes the remainder.
pub fn split_indices(n: usize, fractions: [f64; 3], seed: u64) -> Result<Split, PipelineError> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(PipelineError::Config(format!("split fractions {fractions:?} must sum to 1")));
    }
    // the epsilon keeps products such as 31500 * 0.8 from landing just below an integer
    let count = |f: f64| ((n as f64 * f + 1e-9).floor() as usize).min(n);
    let n_train = count(fractions[0]);
    let n_val = count(fractions[1]).min(n - n_train);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let val = order.split_off(n_train);
    let (val, test) = val.split_at(n_val);
    Ok(Split {
        train: order,
        val: val.to_vec(),
        test: test.to_vec(),
    })
}

/// One archived image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Item {
    pub source: PathBuf,
    pub archive: PathBuf,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub classes: Vec<String>,
    pub items: Vec<Item>,
    pub split: Split,
}

impl Dataset {
    pub fn split_items(&self, name: SplitName) -> Vec<&Item> {
        self.split.get(name).iter().map(|&i| &self.items[i]).collect()
    }
}

/// Options for turning a directory of images into archives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestOptions {
    pub levels: usize,
    pub block_size: usize,
    /// Where archives go; defaults to a hidden directory under the root.
    pub cache_dir: Option<PathBuf>,
    pub threads: usize,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            levels: 3,
            block_size: CodeblockGrid::DEFAULT_SIZE,
            cache_dir: None,
            threads: 1,
        }
    }
}

fn transcode(source: &Path, target: &Path, levels: usize, grid: CodeblockGrid) -> Result<(), PipelineError> {
    let image = read_image(source)?;
    let cs = encode(&decompose(&image, levels)?, grid)?;
    if let Some(dir) = target.parent() {
        fs::create_dir_all(dir).map_err(|e| PipelineError::Dataset(format!("{}: {e}", dir.display())))?;
    }
    write_codestream(target, &cs)?;
    Ok(())
}

/// Transcode every image of the manifest to a codestream, once. Existing
/// archives are reused; `.wcs` inputs are used in place.
pub fn ingest(root: &Path, manifest: &Manifest, opts: &IngestOptions) -> Result<Vec<Item>, PipelineError> {
    let grid = CodeblockGrid::square(opts.block_size)?;
    let cache = opts.cache_dir.clone().unwrap_or_else(|| {
        root.join(CACHE_DIR)
            .join(format!("L{}-B{}", opts.levels, opts.block_size))
    });
    let items: Vec<Item> = manifest
        .entries
        .iter()
        .map(|e| {
            let is_archive = e.path.extension().is_some_and(|x| x.eq_ignore_ascii_case("wcs"));
            let archive = if is_archive {
                e.path.clone()
            } else {
                let class = &manifest.classes[e.label];
                let name = e.path.file_name().unwrap().to_string_lossy();
                cache.join(class).join(format!("{name}.wcs"))
            };
            Item {
                source: e.path.clone(),
                archive,
                label: e.label,
            }
        })
        .collect();
    let todo: Vec<&Item> = items
        .iter()
        .filter(|i| i.source != i.archive && !i.archive.exists())
        .collect();
    let threads = opts.threads.max(1);
    let chunk = todo.len().div_ceil(threads).max(1);
    std::thread::scope(|s| {
        let handles: Vec<_> = todo
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    part.iter()
                        .try_for_each(|i| transcode(&i.source, &i.archive, opts.levels, grid))
                })
            })
            .collect();
        handles
            .into_iter()
            .try_for_each(|h| h.join().expect("transcode worker panicked"))
    })?;
    Ok(items)
}

/// Scan, transcode and split a dataset directory.
pub fn load_dataset(
    root: &Path,
    opts: &IngestOptions,
    fractions: [f64; 3],
    seed: u64,
) -> Result<Dataset, PipelineError> {
    let manifest = scan_dataset(root)?;
    let items = ingest(root, &manifest, opts)?;
    let split = split_indices(items.len(), fractions, seed)?;
    Ok(Dataset {
        classes: manifest.classes,
        items,
        split,
    })
}
