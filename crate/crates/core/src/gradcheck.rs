//! Central finite-difference gradient checking.
//!
//! The function under test is rebuilt on a fresh [`Tape`] for every
//! evaluation, so it must be deterministic in its parameters.

use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::matrix::Matrix;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// `max |analytic − numeric| / (|analytic| + |numeric| + 1e-12)` over the
    /// compared entries.
    pub max_rel_error: f64,
    /// `(param, flat index)` of the entry attaining `max_rel_error`.
    pub worst: Option<(usize, usize)>,
    pub compared: usize,
    /// Entries where both gradients were below the zero floor.
    pub below_floor: usize,
    /// Largest `|analytic − numeric|` among the below-floor entries.
    pub max_abs_error_below_floor: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct GradCheck {
    pub h: f64,
    /// Entries whose analytic and numeric gradients are both smaller than
    /// this are compared in absolute terms only. Zero compares everything
    /// relatively.
    pub zero_floor: f64,
}

impl GradCheck {
    pub fn new(h: f64) -> Self {
        GradCheck { h, zero_floor: 0.0 }
    }

    pub fn with_zero_floor(mut self, floor: f64) -> Self {
        self.zero_floor = floor;
        self
    }

    /// Analytic gradients of `f` at `params` via the tape.
    pub fn analytic<F>(f: &mut F, params: &[Matrix]) -> Result<(f64, Vec<Matrix>)>
    where
        F: FnMut(&mut Tape, &[Var]) -> Result<Var>,
    {
        let mut tape = Tape::new();
        let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
        let out = f(&mut tape, &vars)?;
        let value = tape.value(out).item();
        let grads = tape.backward(out)?;
        let gs = vars
            .iter()
            .zip(params)
            .map(|(&v, p)| grads.get_or_zeros(v, p))
            .collect();
        Ok((value, gs))
    }

    /// Central-difference gradients of `f` at `params`.
    pub fn numeric<F>(&self, f: &mut F, params: &[Matrix]) -> Result<Vec<Matrix>>
    where
        F: FnMut(&mut Tape, &[Var]) -> Result<Var>,
    {
        let mut eval = |ps: &[Matrix]| -> Result<f64> {
            let mut tape = Tape::new();
            let vars: Vec<Var> = ps.iter().map(|p| tape.constant(p.clone())).collect();
            let out = f(&mut tape, &vars)?;
            Ok(tape.value(out).item())
        };
        let mut work = params.to_vec();
        let mut out = Vec::with_capacity(params.len());
        for p in 0..params.len() {
            let mut g = Matrix::zeros(params[p].rows(), params[p].cols());
            for k in 0..params[p].data().len() {
                let x0 = params[p].data()[k];
                work[p].data_mut()[k] = x0 + self.h;
                let up = eval(&work)?;
                work[p].data_mut()[k] = x0 - self.h;
                let down = eval(&work)?;
                work[p].data_mut()[k] = x0;
                g.data_mut()[k] = (up - down) / (2.0 * self.h);
            }
            out.push(g);
        }
        Ok(out)
    }

    pub fn run<F>(&self, mut f: F, params: &[Matrix]) -> Result<GradCheckReport>
    where
        F: FnMut(&mut Tape, &[Var]) -> Result<Var>,
    {
        let (_, analytic) = Self::analytic(&mut f, params)?;
        let numeric = self.numeric(&mut f, params)?;
        Ok(self.compare(&analytic, &numeric))
    }

    pub fn compare(&self, analytic: &[Matrix], numeric: &[Matrix]) -> GradCheckReport {
        let mut report = GradCheckReport {
            max_rel_error: 0.0,
            worst: None,
            compared: 0,
            below_floor: 0,
            max_abs_error_below_floor: 0.0,
        };
        for (p, (a, n)) in analytic.iter().zip(numeric).enumerate() {
            for (k, (&ga, &gn)) in a.data().iter().zip(n.data()).enumerate() {
                let abs = (ga - gn).abs();
                if ga.abs() < self.zero_floor && gn.abs() < self.zero_floor {
                    report.below_floor += 1;
                    report.max_abs_error_below_floor = report.max_abs_error_below_floor.max(abs);
                    continue;
                }
                report.compared += 1;
                let rel = abs / (ga.abs() + gn.abs() + 1e-12);
                if rel > report.max_rel_error || report.worst.is_none() {
                    report.max_rel_error = report.max_rel_error.max(rel);
                    report.worst = Some((p, k));
                }
            }
        }
        report
    }
}

/// Maximum relative error between analytic and central-difference
/// gradients of `f` over every parameter entry.
pub fn finite_diff_check<F>(f: F, params: &[Matrix], h: f64) -> Result<f64>
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var>,
{
    Ok(GradCheck::new(h).run(f, params)?.max_rel_error)
}
