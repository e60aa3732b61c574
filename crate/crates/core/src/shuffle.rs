//! Seeded external-memory shuffle of a whole corpus.
//!
//! Two passes. The scatter pass streams every shard line into one of `B`
//! scratch buckets picked uniformly at random. The gather pass loads one
//! bucket at a time, Fisher-Yates shuffles it in memory and appends it to the
//! output. The result is a uniform permutation as long as each bucket fits in
//! memory; `B` is sized from the input volume and the memory budget.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::{strip_newline, CorpusManifest};

#[derive(Debug, Error)]
pub enum ShuffleError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("not enough scratch space under {}", .0.display())]
    InsufficientScratchSpace(PathBuf),
}

fn io_err(path: &Path, source: io::Error) -> ShuffleError {
    if matches!(
        source.kind(),
        io::ErrorKind::StorageFull | io::ErrorKind::QuotaExceeded
    ) {
        return ShuffleError::InsufficientScratchSpace(path.to_path_buf());
    }
    ShuffleError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone)]
pub struct ShuffleOptions {
    pub seed: u64,
    /// Target upper bound on the bytes held in memory during the gather pass.
    pub memory_budget: u64,
    /// Where bucket files go; defaults to the output file's directory.
    pub scratch_dir: Option<PathBuf>,
}

impl ShuffleOptions {
    pub fn new(seed: u64) -> Self {
        ShuffleOptions {
            seed,
            memory_budget: 256 << 20,
            scratch_dir: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShuffleReport {
    pub lines: u64,
    pub buckets: usize,
}

pub fn shuffle_dataset(
    manifest: &CorpusManifest,
    seed: u64,
    out_path: &Path,
) -> Result<ShuffleReport, ShuffleError> {
    shuffle_with(manifest, &ShuffleOptions::new(seed), out_path)
}

pub fn shuffle_with(
    manifest: &CorpusManifest,
    opts: &ShuffleOptions,
    out_path: &Path,
) -> Result<ShuffleReport, ShuffleError> {
    let inputs: Vec<PathBuf> = manifest.shards().iter().map(|s| manifest.resolve(s)).collect();
    let mut total_bytes = 0u64;
    for path in &inputs {
        total_bytes += std::fs::metadata(path).map_err(|e| io_err(path, e))?.len();
    }
    let budget = opts.memory_budget.max(1);
    let buckets = total_bytes.div_ceil(budget).max(1) as usize;

    let scratch_root = match &opts.scratch_dir {
        Some(dir) => dir.clone(),
        None => out_path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from(".")),
    };
    let scratch = tempfile::Builder::new()
        .prefix(".mtforge-shuffle-")
        .tempdir_in(&scratch_root)
        .map_err(|e| io_err(&scratch_root, e))?;
    let bucket_paths: Vec<PathBuf> = (0..buckets)
        .map(|i| scratch.path().join(format!("bucket-{i:05}")))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut writers = bucket_paths
        .iter()
        .map(|p| File::create(p).map(BufWriter::new).map_err(|e| io_err(p, e)))
        .collect::<Result<Vec<_>, _>>()?;

    let mut lines = 0u64;
    let mut buf = String::new();
    for path in &inputs {
        let mut reader = BufReader::new(File::open(path).map_err(|e| io_err(path, e))?);
        loop {
            buf.clear();
            if reader.read_line(&mut buf).map_err(|e| io_err(path, e))? == 0 {
                break;
            }
            let b = rng.gen_range(0..buckets);
            let w = &mut writers[b];
            w.write_all(strip_newline(&buf).as_bytes())
                .and_then(|_| w.write_all(b"\n"))
                .map_err(|e| io_err(&bucket_paths[b], e))?;
            lines += 1;
        }
    }
    for (w, p) in writers.iter_mut().zip(&bucket_paths) {
        w.flush().map_err(|e| io_err(p, e))?;
    }
    drop(writers);

    let out_dir = out_path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let staged = tempfile::NamedTempFile::new_in(out_dir).map_err(|e| io_err(out_dir, e))?;
    {
        let mut out = BufWriter::new(staged.as_file());
        for p in &bucket_paths {
            let text = std::fs::read_to_string(p).map_err(|e| io_err(p, e))?;
            let mut bucket: Vec<&str> = text.lines().collect();
            bucket.shuffle(&mut rng);
            for line in bucket {
                out.write_all(line.as_bytes())
                    .and_then(|_| out.write_all(b"\n"))
                    .map_err(|e| io_err(out_path, e))?;
            }
            std::fs::remove_file(p).map_err(|e| io_err(p, e))?;
        }
        out.flush().map_err(|e| io_err(out_path, e))?;
    }
    staged
        .persist(out_path)
        .map_err(|e| io_err(out_path, e.error))?;
    Ok(ShuffleReport { lines, buckets })
}
