//! Parallel transport and the two maps between couplings and `Aut^δ`
//! trivializations.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::chartman::{segment_path, PartitionOfUnity, Path};
use crate::connection::{
    accordance, coupling_equivalent, form_from_fn, left_log_derivative, reexpress, validate_connection, ConnectionForm,
};
use crate::error::{input, Error, Result};
use crate::lab::{check_delta_continuity, trivializations_equivalent, validate_lab, DeltaReport, Trivialization};
use crate::Tolerances;

pub const DEFAULT_STEPS: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct TransportResult {
    pub matrix: DMatrix<f64>,
    pub aut_residual: f64,
    pub ode_steps: usize,
}

fn omega_at(c: &ConnectionForm, chart: usize, p: &DVector<f64>, v: &DVector<f64>) -> Result<DMatrix<f64>> {
    let g = c.bundle.manifold.grid(chart);
    let n = c.bundle.dim();
    let mut out = DMatrix::zeros(n, n);
    for (i, w) in c.omega[chart].iter().enumerate() {
        if v[i] != 0.0 {
            let wi = g
                .interpolate(w, p)
                .ok_or_else(|| Error::Input(format!("path leaves chart {chart}")))?;
            out += wi * v[i];
        }
    }
    Ok(out)
}

/// Solves `T' = −ω(γ̇) T`, `T(0) = I` along a straight path by RK4.
pub fn parallel_transport(c: &ConnectionForm, path: &Path) -> Result<TransportResult> {
    let n = c.bundle.dim();
    let dt = path.step();
    let mut t = DMatrix::<f64>::identity(n, n);
    for s in 0..path.steps() {
        let (p0, p1) = (&path.points[s], &path.points[s + 1]);
        let mid = (p0 + p1) * 0.5;
        let a0 = -omega_at(c, path.chart, p0, &path.velocities[s])?;
        let am = -omega_at(c, path.chart, &mid, &path.velocities[s])?;
        let a1 = -omega_at(c, path.chart, p1, &path.velocities[s + 1])?;
        let k1 = &a0 * &t;
        let k2 = &am * (&t + &k1 * (0.5 * dt));
        let k3 = &am * (&t + &k2 * (0.5 * dt));
        let k4 = &a1 * (&t + &k3 * dt);
        t += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    }
    let aut_residual = c.bundle.algebra.automorphism_residual(&t) / t.norm().max(1.0).powi(2);
    Ok(TransportResult {
        matrix: t,
        aut_residual,
        ode_steps: path.steps(),
    })
}

/// One straight leg of a piecewise path.
#[derive(Debug, Clone, PartialEq)]
pub struct Leg {
    pub chart: usize,
    pub from: DVector<f64>,
    pub to: DVector<f64>,
    pub steps: usize,
}

impl Leg {
    pub fn new(chart: usize, from: &[f64], to: &[f64], steps: usize) -> Self {
        Self {
            chart,
            from: DVector::from_column_slice(from),
            to: DVector::from_column_slice(to),
            steps,
        }
    }
}

/// Transport along consecutive legs, applying the transition wherever the
/// chart changes. The result maps `g`-coordinates of the first chart at the
/// start to those of the last chart at the end.
pub fn chain_transport(c: &ConnectionForm, legs: &[Leg]) -> Result<DMatrix<f64>> {
    let m = &c.bundle.manifold;
    let n = c.bundle.dim();
    let mut total = DMatrix::<f64>::identity(n, n);
    for (k, leg) in legs.iter().enumerate() {
        if k > 0 {
            let prev = &legs[k - 1];
            if prev.chart == leg.chart {
                if (&prev.to - &leg.from).norm() > 1e-9 {
                    return input(format!("legs {} and {k} do not meet", k - 1));
                }
            } else {
                let switch = m
                    .overlaps
                    .iter()
                    .enumerate()
                    .find(|(_, o)| {
                        o.alpha == prev.chart
                            && o.beta == leg.chart
                            && o.region_grid.contains(&prev.to, 1e-9)
                            && (o.map.apply(&prev.to) - &leg.from).norm() <= 1e-9
                    })
                    .ok_or_else(|| Error::Input(format!("legs {} and {k} are not joined by an overlap", k - 1)))?;
                let (idx, o) = switch;
                let p = o
                    .region_grid
                    .interpolate(&c.bundle.transitions[idx], &prev.to)
                    .expect("point in region");
                total = p * total;
            }
        }
        let path = segment_path(m, leg.chart, &leg.from, &leg.to, leg.steps)?;
        total = parallel_transport(c, &path)?.matrix * total;
    }
    Ok(total)
}

/// How chart centers are joined to nodes in [`f_map_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RaySystem {
    /// Straight segments.
    Straight,
    /// Axis-parallel segments, axis 0 first.
    AxisOrdered,
}

/// Output of [`f_map`]: the trivialization and its theorem check.
#[derive(Debug, Clone, PartialEq)]
pub struct FMapResult {
    pub trivialization: Trivialization,
    /// Worst relative automorphism residual of the new transitions.
    pub transition_aut_residual: f64,
    /// Worst automorphism residual of a single ray transport.
    pub transport_aut_residual: f64,
    pub delta: DeltaReport,
    /// Transitions are automorphisms and delta-continuous.
    pub theorem_holds: bool,
}

/// Connection to trivialization: `φ^∇_α(x) = φ_α(x) T_α(x)` with `T_α(x)`
/// the transport from the chart center along the ray to `x`.
///
/// `ω` is accepted as derivation-valued at `tol.trans`, the accuracy of
/// forms produced by [`g_map`] from transported frames.
pub fn f_map(c: &ConnectionForm, tol: &Tolerances) -> Result<FMapResult> {
    f_map_with(c, tol, RaySystem::Straight, DEFAULT_STEPS)
}

pub fn f_map_with(c: &ConnectionForm, tol: &Tolerances, rays: RaySystem, steps: usize) -> Result<FMapResult> {
    let acc = accordance(c, tol);
    if !acc.passed {
        return Err(Error::Precondition(format!(
            "not a coupling: accordance residual {:.3e}",
            acc.max_residual
        )));
    }
    let v = validate_connection(
        c,
        &Tolerances {
            alg: tol.alg.max(tol.trans),
            ..*tol
        },
    );
    if !v.passed {
        return Err(Error::Precondition(format!("connection does not validate ({:?})", v.worst)));
    }
    let m = &c.bundle.manifold;
    let mut transport_aut = 0.0f64;
    let mut frames = Vec::with_capacity(m.charts.len());
    for (k, chart) in m.charts.iter().enumerate() {
        let center = chart.center_point();
        let mut fk = Vec::with_capacity(chart.grid.len());
        for x in 0..chart.grid.len() {
            let target = chart.grid.point(x);
            let legs = match rays {
                RaySystem::Straight => vec![Leg {
                    chart: k,
                    from: center.clone(),
                    to: target,
                    steps,
                }],
                RaySystem::AxisOrdered => {
                    let mut legs = Vec::new();
                    let mut cur = center.clone();
                    for a in 0..m.dim {
                        let mut next = cur.clone();
                        next[a] = target[a];
                        legs.push(Leg {
                            chart: k,
                            from: cur,
                            to: next.clone(),
                            steps,
                        });
                        cur = next;
                    }
                    legs
                }
            };
            let t = chain_transport(c, &legs)?;
            transport_aut = transport_aut.max(c.bundle.algebra.automorphism_residual(&t) / t.norm().max(1.0).powi(2));
            fk.push(&c.bundle.frames[k][x] * t);
        }
        frames.push(fk);
    }
    let triv = c.bundle.with_frames(frames)?;
    let transition_aut = validate_lab(&triv, tol).residuals.get("automorphism").copied().unwrap_or(0.0);
    let delta = check_delta_continuity(&triv, tol)?;
    Ok(FMapResult {
        theorem_holds: transition_aut <= tol.trans && delta.passed,
        trivialization: triv,
        transition_aut_residual: transition_aut,
        transport_aut_residual: transport_aut,
        delta,
    })
}

/// Trivialization plus partition of unity to connection:
/// `∇ = Σ_α h_α ∇^{Φ,α}` with `∇^{Φ,α} = φ_α ∂ φ_α⁻¹`, written in each
/// chart's frame as `ω_β = Σ_α h_α t⁻¹ ∂t`, `t = φ_βα`.
///
/// Transitions are accepted as automorphisms at `tol.trans`, the accuracy of
/// bundles produced by [`f_map`].
pub fn g_map(t: &Trivialization, h: &PartitionOfUnity, tol: &Tolerances) -> Result<ConnectionForm> {
    let v = validate_lab(
        t,
        &Tolerances {
            alg: tol.alg.max(tol.trans),
            ..*tol
        },
    );
    if !v.passed {
        return Err(Error::Precondition(format!("bundle does not validate ({:?})", v.worst)));
    }
    let delta = check_delta_continuity(t, tol)?;
    if !delta.passed {
        let why = if delta.undecided { "undecided" } else { "outer" };
        return Err(Error::Precondition(format!("transitions are not delta-continuous ({why})")));
    }
    g_map_unchecked(t, h)
}

/// [`g_map`] without the validity and continuity preconditions.
pub fn g_map_unchecked(t: &Trivialization, h: &PartitionOfUnity) -> Result<ConnectionForm> {
    let m = &t.manifold;
    m.check_shape(&h.values, "partition of unity")?;
    let n = t.dim();
    let omega = form_from_fn(t, |k, i, x| {
        let mut w = DMatrix::zeros(n, n);
        let mut seen = vec![false; m.charts.len()];
        seen[k] = true;
        for (r, o) in m.overlaps_from(k) {
            let Some(pos) = o.contains_node(x) else { continue };
            if seen[o.beta] {
                continue;
            }
            seen[o.beta] = true;
            let ha = h.evaluate(m, o.beta, &o.images[pos]);
            if ha != 0.0 {
                w += left_log_derivative(&o.region_grid, &t.transitions[r], pos, i) * ha;
            }
        }
        w
    });
    ConnectionForm::new(t.clone(), omega)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WellDefinedReport {
    pub passed: bool,
    pub residual: f64,
}

/// `g_map(T, H)` and `g_map(T', H')` differ by an inner one-form.
pub fn verify_g_well_defined(
    a: &Trivialization,
    b: &Trivialization,
    ha: &PartitionOfUnity,
    hb: &PartitionOfUnity,
    tol: &Tolerances,
) -> Result<WellDefinedReport> {
    let eq = trivializations_equivalent(a, b, tol)?;
    if !eq.passed {
        return Err(Error::Precondition("trivializations are not equivalent".into()));
    }
    let ca = g_map(a, ha, tol)?;
    let cb = reexpress(&g_map(b, hb, tol)?, a)?;
    let r = coupling_equivalent(&ca, &cb, tol)?;
    Ok(WellDefinedReport {
        passed: r.passed,
        residual: r.max_residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `g ∘ f` on a connection.
    FromConnection,
    /// `f ∘ g` on a trivialization.
    FromBundle,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundTripReport {
    pub direction: Direction,
    pub passed: bool,
    /// An undecided inner verdict blocked the decision.
    pub inconclusive: bool,
    pub undecided: usize,
    pub residuals: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl RoundTripReport {
    fn new(direction: Direction) -> Self {
        Self {
            direction,
            passed: false,
            inconclusive: false,
            undecided: 0,
            residuals: BTreeMap::new(),
            reason: None,
        }
    }

    fn refused(mut self, e: Error) -> Result<Self> {
        match e {
            Error::Precondition(msg) => {
                self.reason = Some(msg);
                Ok(self)
            }
            other => Err(other),
        }
    }
}

/// `coupling_equivalent(g(f(C)), C)`.
pub fn verify_inverse_connection(c: &ConnectionForm, h: &PartitionOfUnity, tol: &Tolerances) -> Result<RoundTripReport> {
    let mut rep = RoundTripReport::new(Direction::FromConnection);
    let f = match f_map(c, tol) {
        Ok(f) => f,
        Err(e) => return rep.refused(e),
    };
    rep.residuals.insert("transition_automorphism".into(), f.transition_aut_residual);
    rep.undecided = f.delta.undecided_count();
    if f.delta.undecided {
        rep.inconclusive = true;
        rep.reason = Some("undecided inner verdict in f_map output".into());
        return Ok(rep);
    }
    let back = match g_map(&f.trivialization, h, tol) {
        Ok(b) => b,
        Err(e) => return rep.refused(e),
    };
    let back = reexpress(&back, &c.bundle)?;
    let eq = coupling_equivalent(c, &back, tol)?;
    rep.residuals.insert("coupling".into(), eq.max_residual);
    rep.passed = eq.passed && f.theorem_holds;
    Ok(rep)
}

/// `trivializations_equivalent(f(g(T)), T)`.
pub fn verify_inverse_bundle(t: &Trivialization, h: &PartitionOfUnity, tol: &Tolerances) -> Result<RoundTripReport> {
    let mut rep = RoundTripReport::new(Direction::FromBundle);
    let c = match g_map(t, h, tol) {
        Ok(c) => c,
        Err(e) => return rep.refused(e),
    };
    rep.residuals.insert("accordance".into(), accordance(&c, tol).max_residual);
    let f = match f_map(&c, tol) {
        Ok(f) => f,
        Err(e) => return rep.refused(e),
    };
    rep.residuals.insert("transition_automorphism".into(), f.transition_aut_residual);
    let eq = trivializations_equivalent(&f.trivialization, t, tol)?;
    rep.undecided = f.delta.undecided_count() + eq.undecided_count();
    rep.residuals.insert("equivalence_inner".into(), eq.max_inner_residual());
    rep.residuals.insert(
        "equivalence_automorphism".into(),
        eq.regions.iter().filter_map(|r| r.automorphism_residual).fold(0.0, f64::max),
    );
    if f.delta.undecided || eq.undecided {
        rep.inconclusive = true;
        rep.reason = Some("undecided inner verdict".into());
        return Ok(rep);
    }
    rep.passed = eq.passed && f.theorem_holds;
    Ok(rep)
}
