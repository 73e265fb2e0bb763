pub mod cluster;
pub mod impute;
pub mod scan;
pub mod select;
pub mod simulate;

use std::path::Path;

use anyhow::Result;
use gwasms::genotype::DatasetFiles;
use gwasms::Dataset;

use crate::{usage, InputArgs};

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!("input file {} does not exist", path.display())))
    }
}

impl InputArgs {
    pub fn paths(&self) -> Vec<&Path> {
        std::iter::once(self.genotypes.as_path())
            .chain(self.meta.as_deref())
            .chain(self.trait_values.as_deref())
            .chain(self.covariates.as_deref())
            .collect()
    }

    /// Loads the dataset; malformed or missing inputs are usage errors.
    pub fn load(&self) -> Result<Dataset> {
        for p in self.paths() {
            require_file(p)?;
        }
        DatasetFiles {
            genotypes: self.genotypes.clone(),
            meta: self.meta.clone(),
            trait_values: self.trait_values.clone(),
            covariates: self.covariates.clone(),
        }
        .load()
        .map_err(usage)
    }
}

/// `snp_id` of every index, in order.
fn ids(dataset: &Dataset, indices: &[usize]) -> Vec<String> {
    indices.iter().map(|&j| dataset.snp_id(j).to_string()).collect()
}
