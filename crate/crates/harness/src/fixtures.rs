//! Synthetic stand-ins for the COMPAS and MEPS splits: group sizes and
//! per-group prevalences match the published train/test figures, features
//! are two weakly separated Gaussians whose class-conditionals do not change
//! between the splits (pure prior shift).

use std::collections::BTreeMap;

use cape::dataset::{generate_synthetic, Dataset, Gaussian, SyntheticGaussians, SyntheticSpec};
use cape::seed::derive;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitShape {
    pub train_size: usize,
    /// Fraction of rows in group 1.
    pub train_group1_share: f64,
    pub train_prevalence: [f64; 2],
    pub test_size: usize,
    pub test_group1_share: f64,
    pub test_prevalence: [f64; 2],
}

pub const COMPAS: SplitShape = SplitShape {
    train_size: 4278,
    train_group1_share: 0.5970,
    train_prevalence: [0.327, 0.486],
    test_size: 1809,
    test_group1_share: 0.6086,
    test_prevalence: [0.636, 0.706],
};

pub const MEPS: SplitShape = SplitShape {
    train_size: 33400,
    train_group1_share: 0.6286,
    train_prevalence: [0.253, 0.124],
    test_size: 32006,
    test_group1_share: 0.6172,
    test_prevalence: [0.253, 0.117],
};

impl SplitShape {
    /// Same shares and prevalences at `factor` times the row counts.
    pub fn scaled(self, factor: f64) -> Self {
        SplitShape {
            train_size: (self.train_size as f64 * factor).round() as usize,
            test_size: (self.test_size as f64 * factor).round() as usize,
            ..self
        }
    }
}

/// Class-conditionals about one standard deviation apart.
pub fn weak_gaussians() -> SyntheticGaussians {
    SyntheticGaussians {
        u_pos: Gaussian::new(1.0, 1.0),
        u_neg: Gaussian::new(0.0, 1.0),
        v_pos: Gaussian::new(0.0, 1.0),
        v_neg: Gaussian::new(0.7, 1.0),
    }
}

fn split(size: usize, share: f64, prevalence: [f64; 2], seed: u64) -> cape::Result<Dataset> {
    let n1 = (size as f64 * share).round() as usize;
    let parts = [(0u32, size - n1), (1, n1)]
        .iter()
        .map(|&(z, n)| {
            generate_synthetic(&SyntheticSpec {
                prevalence: BTreeMap::from([(z, prevalence[z as usize])]),
                size: n,
                gaussians: weak_gaussians(),
                seed: derive(seed, &[z as u64]),
            })
        })
        .collect::<cape::Result<Vec<_>>>()?;
    Dataset::concat(&[&parts[0], &parts[1]])
}

/// `(train, test)` for `shape`.
pub fn generate(shape: &SplitShape, seed: u64) -> cape::Result<(Dataset, Dataset)> {
    Ok((
        split(
            shape.train_size,
            shape.train_group1_share,
            shape.train_prevalence,
            derive(seed, &[0]),
        )?,
        split(
            shape.test_size,
            shape.test_group1_share,
            shape.test_prevalence,
            derive(seed, &[1]),
        )?,
    ))
}
