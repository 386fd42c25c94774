use serde::Serialize;

use crate::error::{Error, Result};
use crate::hamiltonian::{Hamiltonian, MassVector};
use crate::lattice::WaveState;
use crate::series::ObservableSeries;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisTrace {
    pub interval: [f64; 2],
    pub records: usize,
    pub sup_x_opnorm: Vec<f64>,
    /// Empty when the series carries no `‖P_jψ‖` column.
    pub sup_p_opnorm: Vec<f64>,
    pub sup_h_opnorm: f64,
    /// Largest `|‖Hψ(t)‖ − ‖Hψ(t₀)‖|`.
    pub h_opnorm_deviation: f64,
    pub h_opnorm_tolerance: f64,
    pub h_opnorm_constant: bool,
    /// Relative growth of the running sup over the last quarter of the
    /// interval, worst over all traced norms.
    pub final_quarter_growth: f64,
    pub stabilized: bool,
    /// Every traced sup is finite.
    pub bounded: bool,
    pub verdict: &'static str,
}

fn sup_growth(t: &[f64], v: &[f64], t_quarter: f64) -> (f64, f64) {
    let mut sup = f64::NEG_INFINITY;
    let mut sup_at_quarter = f64::NEG_INFINITY;
    for (ti, vi) in t.iter().zip(v) {
        if !vi.is_finite() {
            return (f64::INFINITY, f64::INFINITY);
        }
        sup = sup.max(*vi);
        if *ti <= t_quarter {
            sup_at_quarter = sup;
        }
    }
    let growth = if sup > 0.0 { (sup - sup_at_quarter) / sup } else { 0.0 };
    (sup, growth)
}

/// Sup of `‖X_jψ‖`, `‖P_jψ‖` and `‖Hψ‖` over `interval`.
///
/// The verdict is "bounded" when every sup is finite. Whether the running
/// sup has stopped growing is reported separately, since a freely
/// spreading packet has a finite sup on any bounded interval yet keeps
/// growing until its end.
pub fn hypothesis_trace(
    series: &ObservableSeries,
    interval: [f64; 2],
    h_opnorm_tolerance: f64,
    stabilization: f64,
) -> Result<HypothesisTrace> {
    let [a, b] = interval;
    if !(b > a) {
        return Err(Error::InvalidSeries(format!("empty interval [{a}, {b}]")));
    }
    let w = series.window(a, b);
    if w.len() < 2 {
        return Err(Error::InvalidSeries(format!(
            "series has {} records inside [{a}, {b}]",
            w.len()
        )));
    }
    let t = w.times();
    let tol_t = 1e-9 * (b - a);
    if t[0] > a + tol_t || t[t.len() - 1] < b - tol_t {
        return Err(Error::InvalidSeries(format!(
            "series covers [{}, {}], not [{a}, {b}]",
            t[0],
            t[t.len() - 1]
        )));
    }
    let t_quarter = b - 0.25 * (b - a);
    let mut growth: f64 = 0.0;
    let mut sup_x = Vec::new();
    let mut sup_p = Vec::new();
    for j in 0..w.dims() {
        let (s, g) = sup_growth(&t, &w.column(|r| r.x_opnorm[j]), t_quarter);
        sup_x.push(s);
        growth = growth.max(g);
        if w.records().iter().all(|r| r.p_opnorm.len() == w.dims()) {
            let (s, g) = sup_growth(&t, &w.column(|r| r.p_opnorm[j]), t_quarter);
            sup_p.push(s);
            growth = growth.max(g);
        }
    }
    let hn = w.column(|r| r.h_opnorm);
    let (sup_h, g) = sup_growth(&t, &hn, t_quarter);
    growth = growth.max(g);
    let dev = hn.iter().map(|v| (v - hn[0]).abs()).fold(0.0, f64::max);
    let bounded = sup_x.iter().chain(&sup_p).all(|v| v.is_finite()) && sup_h.is_finite();
    Ok(HypothesisTrace {
        interval,
        records: w.len(),
        sup_x_opnorm: sup_x,
        sup_p_opnorm: sup_p,
        sup_h_opnorm: sup_h,
        h_opnorm_deviation: dev,
        h_opnorm_tolerance,
        h_opnorm_constant: dev <= h_opnorm_tolerance,
        final_quarter_growth: growth,
        stabilized: growth < stabilization,
        bounded,
        verdict: if bounded { "bounded" } else { "unbounded" },
    })
}

/// Sobolev-type norms of one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct H2Diagnostic {
    pub l2: f64,
    /// `‖∇ψ‖`.
    pub gradient: f64,
    /// `‖Tψ‖` with the given masses.
    pub kinetic: f64,
    /// `‖Δψ‖`.
    pub laplacian: f64,
    /// `(‖ψ‖² + ‖∇ψ‖² + ‖Δψ‖²)^½`.
    pub h2: f64,
}

/// Spectral evaluation of the `H²` norms of `psi`.
pub fn h2_diagnostic(psi: &WaveState, masses: &MassVector) -> Result<H2Diagnostic> {
    let lat = psi.lattice();
    if masses.len() != lat.dims() {
        return Err(Error::InvalidState(format!(
            "{} masses for a {}-dimensional lattice",
            masses.len(),
            lat.dims()
        )));
    }
    let hat = psi.to_momentum()?;
    let p2 = lat.momentum_field(|p| p.iter().map(|v| v * v).sum::<f64>());
    let t = lat.momentum_field(|p| {
        p.iter()
            .enumerate()
            .map(|(j, v)| v * v / (2.0 * masses.get(j)))
            .sum::<f64>()
    });
    let w = lat.weight();
    let (mut g, mut k, mut l) = (0.0, 0.0, 0.0);
    for ((z, q), tk) in hat.amplitudes().iter().zip(&p2).zip(&t) {
        let a = z.norm_sqr();
        g += q * a;
        k += tk * tk * a;
        l += q * q * a;
    }
    let l2 = psi.norm();
    let (g, k, l) = ((w * g).sqrt(), (w * k).sqrt(), (w * l).sqrt());
    Ok(H2Diagnostic {
        l2,
        gradient: g,
        kinetic: k,
        laplacian: l,
        h2: (l2 * l2 + g * g + l * l).sqrt(),
    })
}

/// `‖Hψ‖` evaluated directly, for comparing against recorded values.
pub fn h_opnorm(h: &Hamiltonian, psi: &WaveState) -> Result<f64> {
    Ok(h.apply_h(psi)?.norm())
}
