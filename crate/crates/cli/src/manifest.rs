//! Pairing generated and real images by file name.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{HarnessError, Result};
use crate::imageio::list_files;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PairEntry {
    pub id: String,
    pub gen: PathBuf,
    pub real: PathBuf,
}

/// Pairs in lexicographic identifier order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PairManifest {
    entries: Vec<PairEntry>,
}

impl PairManifest {
    pub fn entries(&self) -> &[PairEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.id.as_str())
    }
}

#[derive(Clone, Debug)]
pub struct MatchedPairs {
    pub manifest: PairManifest,
    /// One message per file present on only one side.
    pub warnings: Vec<String>,
}

pub fn match_pairs(gen_dir: &Path, real_dir: &Path) -> Result<MatchedPairs> {
    let gen: BTreeSet<String> = list_files(gen_dir)?.into_iter().collect();
    let real: BTreeSet<String> = list_files(real_dir)?.into_iter().collect();

    let mut warnings = Vec::new();
    for (only, dir) in [(gen.difference(&real), gen_dir), (real.difference(&gen), real_dir)] {
        for name in only {
            warnings.push(format!("{name} in {} has no counterpart; skipped", dir.display()));
        }
    }
    warnings.iter().for_each(|w| log::warn!("{w}"));

    let entries: Vec<PairEntry> = gen
        .intersection(&real)
        .map(|name| PairEntry {
            id: name.clone(),
            gen: gen_dir.join(name),
            real: real_dir.join(name),
        })
        .collect();
    if entries.is_empty() {
        return Err(HarnessError::NoPairsFound {
            gen: gen_dir.to_path_buf(),
            real: real_dir.to_path_buf(),
        });
    }
    Ok(MatchedPairs {
        manifest: PairManifest { entries },
        warnings,
    })
}
