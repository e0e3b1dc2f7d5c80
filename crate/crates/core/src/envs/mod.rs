//! Desk-scale multi-objective control problems with exact or brute-force
//! Pareto-front oracles.

mod lqr;
mod pointnav;

pub use lqr::{
    lqr_monte_carlo_returns, lqr_oracle_front, lqr_scalarized_solution, LqrOracleEntry, MoLqrEnv, MoLqrParams,
};
pub use pointnav::{
    go_to_target_returns, pointnav_oracle_front, targets_from_grid, DistanceMetric, MoPointNavEnv, MoPointNavParams,
};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::momdp::{Environment, MomdpSpec, Preference, Step};

/// Oracle Pareto front: non-dominated `(preference, objectives)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleFront {
    pub entries: Vec<(Preference, Vec<f64>)>,
    pub method: String,
}

impl OracleFront {
    pub fn objectives(&self) -> Vec<Vec<f64>> {
        self.entries.iter().map(|(_, j)| j.clone()).collect()
    }
}

/// Environment selection as it appears in run configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id")]
pub enum EnvConfig {
    #[serde(rename = "mo-lqr")]
    Lqr(MoLqrParams),
    #[serde(rename = "mo-pointnav")]
    PointNav(MoPointNavParams),
}

impl EnvConfig {
    pub fn id(&self) -> &'static str {
        match self {
            EnvConfig::Lqr(_) => "mo-lqr",
            EnvConfig::PointNav(_) => "mo-pointnav",
        }
    }

    /// Reference front over the given preference grid: exact Riccati
    /// solutions for LQR, go-to-target returns for point navigation.
    pub fn oracle_front(&self, grid: &[Preference]) -> Result<OracleFront> {
        match self {
            EnvConfig::Lqr(p) => lqr_oracle_front(p, grid),
            EnvConfig::PointNav(p) => pointnav_oracle_front(p, &targets_from_grid(p, grid)?),
        }
    }

    pub fn build(&self) -> Result<AnyEnv> {
        Ok(match self {
            EnvConfig::Lqr(p) => AnyEnv::Lqr(MoLqrEnv::new(p.clone())?),
            EnvConfig::PointNav(p) => AnyEnv::PointNav(MoPointNavEnv::new(p.clone())?),
        })
    }
}

/// Closed set of shipped environments, so trainers can stay monomorphic.
#[derive(Debug, Clone)]
pub enum AnyEnv {
    Lqr(MoLqrEnv),
    PointNav(MoPointNavEnv),
}

macro_rules! dispatch {
    ($self:ident, $e:ident => $body:expr) => {
        match $self {
            AnyEnv::Lqr($e) => $body,
            AnyEnv::PointNav($e) => $body,
        }
    };
}

impl Environment for AnyEnv {
    fn spec(&self) -> &MomdpSpec {
        dispatch!(self, e => e.spec())
    }

    fn seed(&mut self, seed: u64) {
        dispatch!(self, e => e.seed(seed))
    }

    fn reset(&mut self) -> Vec<f64> {
        dispatch!(self, e => e.reset())
    }

    fn reset_to(&mut self, state: &[f64]) -> Result<Vec<f64>> {
        dispatch!(self, e => e.reset_to(state))
    }

    fn step(&mut self, action: &[f64]) -> Result<Step> {
        dispatch!(self, e => e.step(action))
    }

    fn evaluation_starts(&self, episodes: usize, seed: u64) -> Vec<Vec<f64>> {
        dispatch!(self, e => e.evaluation_starts(episodes, seed))
    }
}
