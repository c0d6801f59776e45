//! Couplings between a Lie algebra bundle and the tangent bundle, made computable.
//!
//! The crate discretizes a Lie algebra bundle `L` over a charted manifold as a
//! family of frames with `Aut(g)`-valued transitions, represents Lie connections
//! as chartwise derivation-valued one-forms, and implements the two maps between
//! couplings and `Aut^δ` local trivializations:
//!
//! * [`correspondence::f_map`]: connection to trivialization, by parallel
//!   transport along rays from chart centers;
//! * [`correspondence::g_map`]: trivialization plus partition of unity to
//!   connection.
//!
//! Module map:
//!
//! | module | contents |
//! |---|---|
//! | [`liealg`] | structure constants, `ad`, center, `Der(g)`, exp/log, inner-automorphism test |
//! | [`chartman`] | atlases of gridded boxes, finite differences, partitions of unity, rays |
//! | [`lab`] | trivializations, cocycle validation, `Aut^δ` continuity, pullback |
//! | [`connection`] | connection forms, curvature, accordance, inner shifts |
//! | [`correspondence`] | transport, `f_map`, `g_map`, round trips |
//! | [`bracket`] | algebroid bracket on `L ⊕ TM` and its axioms |
//! | [`fixtures`], [`io`], [`cli`] | named fixtures, JSON files, command line |

pub mod bracket;
pub mod chartman;
pub mod cli;
pub mod connection;
pub mod correspondence;
pub mod error;
pub mod fixtures;
pub mod io;
pub mod lab;
pub mod liealg;
pub mod linalg;

pub use error::{Error, Result};

/// Numerical thresholds shared by every check in the crate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Exact algebraic identities (brackets, Leibniz, automorphism).
    pub alg: f64,
    /// Inner-automorphism decisions.
    pub inner: f64,
    /// Accordance and coupling-equivalence residuals.
    pub acc: f64,
    /// Parallel-transport outputs (ODE-propagated data).
    pub trans: f64,
    /// Gauge compatibility on overlaps.
    pub gauge: f64,
    /// Finite-difference identities at default resolution.
    pub fd: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            alg: 1e-9,
            inner: 1e-6,
            acc: 1e-4,
            trans: 1e-6,
            gauge: 1e-4,
            fd: 1e-4,
        }
    }
}

/// Outcome of a validation pass: a verdict, the worst residuals and where they occur.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub residuals: std::collections::BTreeMap<String, f64>,
    /// Location of the worst failing check, if any check failed.
    pub worst: Option<String>,
    #[serde(skip)]
    worst_value: f64,
}

impl ValidationReport {
    pub(crate) fn new() -> Self {
        Self {
            passed: true,
            residuals: Default::default(),
            worst: None,
            worst_value: 0.0,
        }
    }

    /// Record a named residual; fails the report if it exceeds `tol`.
    pub(crate) fn check(&mut self, name: &str, value: f64, tol: f64, location: impl FnOnce() -> String) {
        let entry = self.residuals.entry(name.to_string()).or_insert(0.0);
        if value > *entry || value.is_nan() {
            *entry = value;
        }
        if !(value <= tol) {
            let excess = if value.is_nan() { f64::INFINITY } else { value / tol.max(f64::MIN_POSITIVE) };
            if self.passed || excess > self.worst_value {
                self.worst = Some(format!("{name}: {}", location()));
                self.worst_value = excess;
            }
            self.passed = false;
        }
    }
}
