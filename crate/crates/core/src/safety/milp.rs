//! Mixed-integer export of the filter problem at one step.
//!
//! The bilinear counter update is linearised with the product variable
//! `Z = u * x` and three big-M inequalities:
//!
//! ```text
//! 0 <= Z <= M u
//! Z >= x - M (1 - u)
//! Z <= x + M (1 - u)
//! ```
//!
//! after which `x(t+1) = x(t) - Z(t) + 1 - u(t)` is linear. The model is
//! written in CPLEX LP text so any MILP solver can cross-check a decision.

use super::{low_bits, FilterConfig, FilterError, FilterMode, SafetyState};
use std::fmt::Write;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarKind {
    Binary,
    Continuous,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Var {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub name: String,
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Row {
    pub fn lhs(&self, values: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(v, c)| c * values[v]).sum()
    }

    pub fn satisfied(&self, values: &[f64], tol: f64) -> bool {
        let lhs = self.lhs(values);
        match self.sense {
            Sense::Le => lhs <= self.rhs + tol,
            Sense::Ge => lhs >= self.rhs - tol,
            Sense::Eq => (lhs - self.rhs).abs() <= tol,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MilpModel {
    pub vars: Vec<Var>,
    pub rows: Vec<Row>,
    /// Linear objective terms, minimised.
    pub objective: Vec<(usize, f64)>,
    pub objective_constant: f64,
}

impl MilpModel {
    pub fn add_var(&mut self, name: String, kind: VarKind, lower: f64, upper: Option<f64>) -> usize {
        self.vars.push(Var {
            name,
            kind,
            lower,
            upper,
        });
        self.vars.len() - 1
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.name == name)
    }

    fn row(&mut self, name: String, coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        self.rows.push(Row {
            name,
            coeffs,
            sense,
            rhs,
        });
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective_constant + self.objective.iter().map(|&(v, c)| c * values[v]).sum::<f64>()
    }

    /// Names of rows or bounds violated by `values`.
    pub fn violations(&self, values: &[f64], tol: f64) -> Vec<String> {
        let mut out: Vec<String> = self
            .rows
            .iter()
            .filter(|r| !r.satisfied(values, tol))
            .map(|r| r.name.clone())
            .collect();
        for (v, x) in self.vars.iter().zip(values) {
            let above = v.upper.is_some_and(|u| *x > u + tol);
            let binary_ok = v.kind != VarKind::Binary || (x.abs() <= tol || (x - 1.0).abs() <= tol);
            if *x < v.lower - tol || above || !binary_ok {
                out.push(format!("bound {}", v.name));
            }
        }
        out
    }

    /// Interval of values for `var` allowed by the rows, all other
    /// variables held at `values`. Only rows mentioning `var` count.
    pub fn feasible_interval(&self, var: usize, values: &[f64]) -> (f64, f64) {
        let v = &self.vars[var];
        let mut lo = v.lower;
        let mut hi = v.upper.unwrap_or(f64::INFINITY);
        for r in &self.rows {
            let a: f64 = r.coeffs.iter().filter(|c| c.0 == var).map(|c| c.1).sum();
            if a == 0.0 {
                continue;
            }
            let rest: f64 = r.coeffs.iter().filter(|c| c.0 != var).map(|&(j, c)| c * values[j]).sum();
            let bound = (r.rhs - rest) / a;
            let (le, ge) = match (r.sense, a > 0.0) {
                (Sense::Eq, _) => (true, true),
                (Sense::Le, true) | (Sense::Ge, false) => (true, false),
                (Sense::Le, false) | (Sense::Ge, true) => (false, true),
            };
            if le {
                hi = hi.min(bound);
            }
            if ge {
                lo = lo.max(bound);
            }
        }
        (lo, hi)
    }

    pub fn to_lp_string(&self, title: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "\\ {title}");
        let _ = writeln!(s, "\\ objective constant: {}", self.objective_constant);
        s.push_str("Minimize\n obj:");
        if self.objective.is_empty() {
            s.push_str(" 0");
        }
        write_terms(&mut s, &self.objective, &self.vars);
        s.push_str("\nSubject To\n");
        for r in &self.rows {
            let _ = write!(s, " {}:", r.name);
            write_terms(&mut s, &r.coeffs, &self.vars);
            let op = match r.sense {
                Sense::Le => "<=",
                Sense::Ge => ">=",
                Sense::Eq => "=",
            };
            let _ = writeln!(s, " {op} {}", r.rhs);
        }
        s.push_str("Bounds\n");
        for v in &self.vars {
            match (v.kind, v.upper) {
                (VarKind::Binary, _) if v.lower == 0.0 => {}
                (_, Some(u)) if u == v.lower => {
                    let _ = writeln!(s, " {} = {}", v.name, u);
                }
                (_, Some(u)) => {
                    let _ = writeln!(s, " {} <= {} <= {}", v.lower, v.name, u);
                }
                (_, None) => {
                    let _ = writeln!(s, " {} >= {}", v.name, v.lower);
                }
            }
        }
        s.push_str("Binaries\n");
        for v in self.vars.iter().filter(|v| v.kind == VarKind::Binary) {
            let _ = writeln!(s, " {}", v.name);
        }
        s.push_str("End\n");
        s
    }
}

fn write_terms(s: &mut String, terms: &[(usize, f64)], vars: &[Var]) {
    for (k, &(v, c)) in terms.iter().enumerate() {
        let sign = if c < 0.0 { "-" } else if k == 0 { "" } else { "+" };
        let _ = write!(s, " {sign} {} {}", c.abs(), vars[v].name);
    }
}

/// The three big-M rows tying `z` to the product `u * x`.
pub fn linearize_product(u: usize, x: usize, z: usize, big_m: f64, tag: &str) -> Vec<Row> {
    vec![
        Row {
            name: format!("bm_a_{tag}"),
            coeffs: vec![(z, 1.0), (u, -big_m)],
            sense: Sense::Le,
            rhs: 0.0,
        },
        Row {
            name: format!("bm_b_{tag}"),
            coeffs: vec![(z, 1.0), (x, -1.0), (u, -big_m)],
            sense: Sense::Ge,
            rhs: -big_m,
        },
        Row {
            name: format!("bm_c_{tag}"),
            coeffs: vec![(z, 1.0), (x, -1.0), (u, big_m)],
            sense: Sense::Le,
            rhs: big_m,
        },
    ]
}

/// Smallest constant that dominates both the lookahead end and every
/// counter value reachable inside the lookahead.
pub fn default_big_m(cfg: &FilterConfig, state: &SafetyState) -> f64 {
    let end = cfg.lookahead_end(state.t);
    let reach = state.units.iter().map(|u| u.since_maint).max().unwrap_or(0) + (end - state.t + 1);
    end.max(reach) as f64
}

/// Builds the filter MILP for the current step of `state`.
///
/// Variables are `u_i_s` (binary), `x_i_s` (counter, fixed at the current
/// step) and `z_i_s` (product) for every unit `i` and lookahead step `s`,
/// plus `x_i_{E+1}`. The objective is the Hamming distance to `request`
/// written linearly: `sum (1 - 2 r_i) u_i_t + sum r_i`.
///
/// Literal mode carries the counter constraint `x_i_E >= H_i`; intent mode
/// replaces it with one coverage row per window that closes inside the
/// lookahead. Both carry the cap, block and open-block rows.
pub fn big_m_expand(
    cfg: &FilterConfig,
    state: &SafetyState,
    request: &[bool],
    big_m: f64,
) -> Result<MilpModel, FilterError> {
    super::search::check_inputs(request.len(), state, cfg)?;
    let t = state.t;
    let end = cfg.lookahead_end(t);
    if !(big_m >= end as f64) {
        return Err(FilterError::BadBigM { big_m, horizon: end });
    }
    let n = request.len();
    let steps: Vec<u64> = (t..=end).collect();
    let mut m = MilpModel::default();
    let mut u = vec![Vec::new(); n];
    let mut x = vec![Vec::new(); n];
    let mut z = vec![Vec::new(); n];
    for i in 0..n {
        let unit = i + 1;
        for &s in &steps {
            u[i].push(m.add_var(format!("u_{unit}_{s}"), VarKind::Binary, 0.0, Some(1.0)));
        }
        for &s in steps.iter().chain(std::iter::once(&(end + 1))) {
            let fixed = (s == t).then_some(state.units[i].since_maint as f64);
            let lower = fixed.unwrap_or(0.0);
            x[i].push(m.add_var(format!("x_{unit}_{s}"), VarKind::Continuous, lower, fixed));
        }
        for &s in &steps {
            z[i].push(m.add_var(format!("z_{unit}_{s}"), VarKind::Continuous, 0.0, None));
        }
    }

    for i in 0..n {
        let r = request[i] as u8 as f64;
        m.objective.push((u[i][0], 1.0 - 2.0 * r));
        m.objective_constant += r;
    }

    for i in 0..n {
        let unit = i + 1;
        let d = cfg.blocks[i] as u64;
        for (k, &s) in steps.iter().enumerate() {
            let tag = format!("{unit}_{s}");
            m.rows.extend(linearize_product(u[i][k], x[i][k], z[i][k], big_m, &tag));
            // x(s+1) - x(s) + z(s) + u(s) = 1
            m.row(
                format!("count_{tag}"),
                vec![(x[i][k + 1], 1.0), (x[i][k], -1.0), (z[i][k], 1.0), (u[i][k], 1.0)],
                Sense::Eq,
                1.0,
            );
            // u(s) - u(s-1) <= u(s+d-1); trivial for d = 1, dropped when
            // s+d-1 leaves the lookahead
            if d > 1 && s + d - 1 <= end {
                let later = u[i][k + d as usize - 1];
                if k == 0 {
                    let prev = (state.units[i].history & 1) as f64;
                    m.row(format!("block_{tag}"), vec![(u[i][0], 1.0), (later, -1.0)], Sense::Le, prev);
                } else {
                    m.row(
                        format!("block_{tag}"),
                        vec![(u[i][k], 1.0), (u[i][k - 1], -1.0), (later, -1.0)],
                        Sense::Le,
                        0.0,
                    );
                }
            }
        }
        let open = state.block_progress(i, cfg);
        if open > 0 {
            let need = (cfg.blocks[i] as u64 - open).min(steps.len() as u64);
            for k in 0..need as usize {
                m.row(format!("open_{unit}_{}", steps[k]), vec![(u[i][k], 1.0)], Sense::Eq, 1.0);
            }
        }
        match cfg.mode {
            FilterMode::Literal => {
                let last = steps.len() - 1;
                m.row(
                    format!("cover_{unit}"),
                    vec![(x[i][last], 1.0)],
                    Sense::Ge,
                    cfg.required[i] as f64,
                );
            }
            FilterMode::Intent => {
                let w = cfg.window as u64;
                for e in t..=end {
                    if e < w {
                        continue;
                    }
                    let start = e + 1 - w;
                    let known_steps = t.saturating_sub(start) as u32;
                    let known = (state.units[i].history & low_bits(known_steps)).count_ones() as f64;
                    let coeffs: Vec<(usize, f64)> =
                        (t.max(start)..=e).map(|s| (u[i][(s - t) as usize], 1.0)).collect();
                    m.row(
                        format!("cover_{unit}_{e}"),
                        coeffs,
                        Sense::Ge,
                        cfg.required[i] as f64 - known,
                    );
                }
            }
        }
    }
    for (k, &s) in steps.iter().enumerate() {
        let coeffs = (0..n).map(|i| (u[i][k], 1.0)).collect();
        m.row(format!("cap_{s}"), coeffs, Sense::Le, cfg.max_concurrent as f64);
    }
    Ok(m)
}

/// Assignment of the model variables induced by a schedule over the
/// lookahead: `u` from the schedule, `x` by the counter recursion and
/// `z = u * x`.
pub fn assignment_from_schedule(
    model: &MilpModel,
    state: &SafetyState,
    schedule: &[Vec<bool>],
) -> Vec<f64> {
    let mut values = vec![0.0; model.vars.len()];
    let t = state.t;
    for (i, us) in state.units.iter().enumerate() {
        let unit = i + 1;
        let mut xv = us.since_maint as f64;
        for (k, row) in schedule.iter().enumerate() {
            let s = t + k as u64;
            let uv = row[i] as u8 as f64;
            let idx = |p: &str, s: u64| model.var_index(&format!("{p}_{unit}_{s}")).expect("variable");
            values[idx("u", s)] = uv;
            values[idx("x", s)] = xv;
            values[idx("z", s)] = uv * xv;
            xv = (1.0 - uv) * xv + (1.0 - uv);
            if k + 1 == schedule.len() {
                values[idx("x", s + 1)] = xv;
            }
        }
    }
    values
}
