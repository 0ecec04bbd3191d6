//! Trainers and the report they share.

pub mod dca;
pub mod dccp;
pub mod sgd;

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::model::{LDerParams, ModelDims};

/// Why a training run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    EpochsExhausted,
    Converged,
    MaxIter,
    SubproblemFailure,
    Diverged,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::EpochsExhausted => "epochs-exhausted",
            Termination::Converged => "converged",
            Termination::MaxIter => "max_iter",
            Termination::SubproblemFailure => "subproblem-failure",
            Termination::Diverged => "diverged",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Full training-set MSE after every epoch (SGD) or outer iteration (DCA, DCCP).
    /// Entry 0 is the loss of the initial parameters.
    pub loss_trace: Vec<f64>,
    /// Epochs or outer iterations performed.
    pub iterations: usize,
    /// Seconds; zero when built without `std`.
    pub wall_time: f64,
    pub termination: Termination,
    /// Penalty `t_k` used by each DCCP subproblem; empty for other trainers.
    pub penalty_trace: Vec<f64>,
    /// `Σ s_i` at each DCCP subproblem optimum; empty for other trainers.
    pub slack_trace: Vec<f64>,
    /// `max_i |δ_a(W x_i) + ξ_i − δ_b(M x_i) − y_i|` after each DCCP subproblem; empty for other trainers.
    pub equality_residual: Vec<f64>,
    /// Total inner QP iterations (DC trainers only).
    pub qp_iterations: usize,
    /// Last DCA subgradient of `H`, the dual iterate. Empty for other trainers.
    pub dual: Vec<f64>,
}

impl TrainReport {
    pub(crate) fn new(termination: Termination) -> Self {
        TrainReport {
            loss_trace: Vec::new(),
            iterations: 0,
            wall_time: 0.0,
            termination,
            penalty_trace: Vec::new(),
            slack_trace: Vec::new(),
            equality_residual: Vec::new(),
            qp_iterations: 0,
            dual: Vec::new(),
        }
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.loss_trace.last().copied()
    }
}

/// Entries i.i.d. normal with mean 0 and standard deviation `init_scale / √(n+1)`.
pub fn init_params(dims: ModelDims, seed: u64, init_scale: f64) -> LDerParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_params(dims, &mut rng, init_scale)
}

pub(crate) fn random_params(dims: ModelDims, rng: &mut ChaCha8Rng, init_scale: f64) -> LDerParams {
    let mut p = LDerParams::zeros(dims);
    let std = init_scale.abs() / libm::sqrt((dims.n + 1) as f64);
    if std == 0.0 || !std.is_finite() {
        return p;
    }
    let normal = Normal::new(0.0, std).expect("finite positive std");
    for v in p.alpha_mut() {
        *v = normal.sample(rng);
    }
    p
}

pub(crate) struct Stopwatch {
    #[cfg(feature = "std")]
    start: std::time::Instant,
}

impl Stopwatch {
    pub(crate) fn start() -> Self {
        Stopwatch {
            #[cfg(feature = "std")]
            start: std::time::Instant::now(),
        }
    }

    pub(crate) fn elapsed(&self) -> f64 {
        #[cfg(feature = "std")]
        {
            self.start.elapsed().as_secs_f64()
        }
        #[cfg(not(feature = "std"))]
        {
            0.0
        }
    }
}
