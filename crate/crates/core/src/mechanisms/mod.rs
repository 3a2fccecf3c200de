//! Geo-indistinguishable obfuscation mechanisms.
//!
//! Every mechanism is a pure function of `(trace, parameters, seed)`: the
//! output has the input's length, user and timestamps, and the same inputs
//! always produce bit-identical positions.

mod adaptive;
mod clustering;
pub mod lambert;
mod planar_laplace;

use std::fmt;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::datasets::Trace;
use crate::geo::GeoError;

pub use adaptive::{adjust_epsilon, linreg_predict, obfuscate_adaptive, obfuscate_adaptive_detailed, AdaptiveParams};
pub use clustering::{
    memory_clustering_step, obfuscate_clustering, obfuscate_memory_clustering, obfuscate_memory_clustering_with_memory,
    ClusterMemory, ClusterParams,
};
pub use planar_laplace::{
    epsilon_noise_table, inverse_cdf_radius, obfuscate_pl, planar_laplace_point, radial_cdf, NoiseRow,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MechanismError {
    #[error("argument outside domain: {0}")]
    Domain(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("regression needs at least two distinct timestamps")]
    DegenerateFit,
    #[error(transparent)]
    Geo(#[from] GeoError),
}

/// Geo-indistinguishability level, in inverse meters.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Epsilon(f64);

impl Epsilon {
    pub fn new(value: f64) -> Result<Self, MechanismError> {
        if value.is_finite() && value > 0.0 {
            Ok(Self(value))
        } else {
            Err(MechanismError::InvalidParameter(format!(
                "epsilon must be positive and finite, got {value}"
            )))
        }
    }

    /// `ℓ`-privacy within radius `r` meters gives `ε = ℓ / r`.
    pub fn from_level_and_radius(level: f64, radius_m: f64) -> Result<Self, MechanismError> {
        Self::new(level / radius_m)
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

impl fmt::Display for Epsilon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Strong, medium and weak privacy levels.
pub const EPSILON_TRIPLE: [f64; 3] = [0.00139, 0.00358, 0.00693];

/// Ten levels swept between the strong and weak ends of [`EPSILON_TRIPLE`].
pub const EPSILON_SWEEP: [f64; 10] = [
    0.00139, 0.00200, 0.00262, 0.00323, 0.00385, 0.00447, 0.00508, 0.00570, 0.00632, 0.00693,
];

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// 64-bit FNV-1a, used to turn names into seed components.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Seed of a random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Seed(pub u64);

impl Seed {
    /// Folds `parts` into the seed with [`mix64`]; order matters.
    pub fn derive(self, parts: &[u64]) -> Seed {
        let mut h = mix64(self.0);
        for &p in parts {
            h = mix64(h ^ mix64(p.wrapping_add(0x9e37_79b9_7f4a_7c15)));
        }
        Seed(h)
    }

    /// Seed of one evaluation cell: `(user, mechanism, ε)` under this master
    /// seed. Independent of scheduling and of the other cells in a run.
    pub fn for_cell(self, user_id: &str, mechanism_id: &str, epsilon: Option<f64>) -> Seed {
        self.derive(&[
            fnv1a64(user_id.as_bytes()),
            fnv1a64(mechanism_id.as_bytes()),
            epsilon.map_or(0, f64::to_bits),
        ])
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

/// A configured mechanism, ready to be applied at some ε.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Mechanism {
    /// Reports the true locations.
    Identity,
    PlanarLaplace,
    Adaptive {
        #[serde(default = "adaptive_defaults::delta1")]
        delta1: f64,
        #[serde(default = "adaptive_defaults::delta2")]
        delta2: f64,
        #[serde(default = "adaptive_defaults::ws")]
        ws: usize,
        #[serde(default = "adaptive_defaults::alpha")]
        alpha: f64,
        #[serde(default = "adaptive_defaults::beta")]
        beta: f64,
    },
    Clustering {
        #[serde(default = "default_radius")]
        radius: f64,
    },
    MemoryClustering {
        #[serde(default = "default_radius")]
        radius: f64,
    },
}

mod adaptive_defaults {
    pub fn delta1() -> f64 {
        693.0
    }
    pub fn delta2() -> f64 {
        1948.0
    }
    pub fn ws() -> usize {
        5
    }
    pub fn alpha() -> f64 {
        0.1
    }
    pub fn beta() -> f64 {
        5.0
    }
}

fn default_radius() -> f64 {
    200.0
}

impl Mechanism {
    pub fn adaptive_default() -> Self {
        Mechanism::Adaptive {
            delta1: adaptive_defaults::delta1(),
            delta2: adaptive_defaults::delta2(),
            ws: adaptive_defaults::ws(),
            alpha: adaptive_defaults::alpha(),
            beta: adaptive_defaults::beta(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Mechanism::Identity => "identity",
            Mechanism::PlanarLaplace => "planar_laplace",
            Mechanism::Adaptive { .. } => "adaptive",
            Mechanism::Clustering { .. } => "clustering",
            Mechanism::MemoryClustering { .. } => "memory_clustering",
        }
    }

    pub fn uses_epsilon(&self) -> bool {
        !matches!(self, Mechanism::Identity)
    }

    /// Checks the static parameters (ε is checked at apply time).
    pub fn validate(&self) -> Result<(), MechanismError> {
        match *self {
            Mechanism::Adaptive {
                delta1,
                delta2,
                ws,
                alpha,
                beta,
            } => AdaptiveParams::new(delta1, delta2, ws, alpha, beta, Epsilon(1.0)).map(|_| ()),
            Mechanism::Clustering { radius } | Mechanism::MemoryClustering { radius } => {
                ClusterParams::new(radius, Epsilon(1.0)).map(|_| ())
            }
            _ => Ok(()),
        }
    }

    pub fn apply(&self, tr: &Trace, epsilon: Option<Epsilon>, seed: Seed) -> Result<Trace, MechanismError> {
        let need_eps = || {
            epsilon.ok_or_else(|| MechanismError::InvalidParameter(format!("{} requires epsilon", self.kind_name())))
        };
        match *self {
            Mechanism::Identity => Ok(tr.clone()),
            Mechanism::PlanarLaplace => obfuscate_pl(tr, need_eps()?, seed),
            Mechanism::Adaptive {
                delta1,
                delta2,
                ws,
                alpha,
                beta,
            } => {
                let params = AdaptiveParams::new(delta1, delta2, ws, alpha, beta, need_eps()?)?;
                obfuscate_adaptive(tr, &params, seed)
            }
            Mechanism::Clustering { radius } => {
                obfuscate_clustering(tr, &ClusterParams::new(radius, need_eps()?)?, seed)
            }
            Mechanism::MemoryClustering { radius } => {
                obfuscate_memory_clustering(tr, &ClusterParams::new(radius, need_eps()?)?, seed)
            }
        }
    }
}
