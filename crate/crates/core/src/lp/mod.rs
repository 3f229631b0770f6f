//! Exact fractional optimum of the restricted flow load balancing LP:
//!
//! ```text
//! min L
//! s.t. sum_{i in M_jk} f_ijk = d_jk                  for every demand
//!      (fixed_e + sum_{flows over e} f_ijk) / c_e <= L  for every link
//!      0 <= f_ijk <= d_jk
//! ```
//!
//! Small instances only; the oracle refuses more than [`MAX_LP_VARIABLES`]
//! flow variables.

mod simplex;

use std::fmt::Write as _;
use std::io::{self, Write};

use thiserror::Error;

use crate::assignment::{place_fixed, AssignmentError, BaselinePolicy, FlowAssignment, FlowKey, LinkLoadState};
use crate::demand::BinDemand;
use crate::topology::{LinkId, Network};
use simplex::{SimplexError, StandardLp};

pub const MAX_LP_VARIABLES: usize = 2000;

#[derive(Debug, Error)]
pub enum LpError {
    #[error(
        "instance has {variables} flow variables; the oracle is limited to {limit}, use the greedy engine instead"
    )]
    TooLarge { variables: usize, limit: usize },
    #[error(transparent)]
    Assignment(#[from] AssignmentError),
    #[error("numerical failure: {reason} ({diagnostics})")]
    Numerical { reason: String, diagnostics: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpVariable {
    pub key: FlowKey,
    pub upper: f64,
    pub path: Vec<LinkId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemandRow {
    pub key: (crate::demand::ProviderId, crate::topology::NodeId),
    pub volume: f64,
    pub vars: Vec<usize>,
}

/// `(fixed + sum_v coef * f_v) / capacity <= L` for one link.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkRow {
    pub link: LinkId,
    pub capacity: f64,
    pub fixed: f64,
    pub vars: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct LpInstance {
    pub bin: usize,
    pub variables: Vec<LpVariable>,
    pub demand_rows: Vec<DemandRow>,
    /// Only links crossed by at least one variable's path.
    pub link_rows: Vec<LinkRow>,
    /// Highest fixed-only utilization on links no variable touches; a lower
    /// bound on L.
    pub fixed_floor: f64,
    fixed: FlowAssignment,
    fixed_state: LinkLoadState,
}

impl LpInstance {
    pub fn variable_count(&self) -> usize {
        self.variables.len()
    }

    /// Placement of the fixed demand the instance was built on.
    pub fn fixed_assignment(&self) -> &FlowAssignment {
        &self.fixed
    }
}

/// Builds the LP for one bin. The fixed content demand is placed by
/// `fixed_policy` and folded, with background, into per-link constants.
pub fn build_lp(bin: &BinDemand, net: &Network, fixed_policy: &BaselinePolicy) -> Result<LpInstance, LpError> {
    let (fixed, fixed_state) = place_fixed(bin, net, fixed_policy)?;
    let mut demands: Vec<_> = bin.adjustable.iter().filter(|d| d.volume > 0.0).collect();
    demands.sort_by_key(|d| (d.provider, d.consumer));

    let mut variables = Vec::new();
    let mut demand_rows = Vec::new();
    let mut on_link: Vec<Vec<usize>> = vec![Vec::new(); net.topology().link_count()];
    for d in demands {
        if d.eligible.is_empty() {
            return Err(AssignmentError::EmptyEligibleSet { provider: d.provider, consumer: d.consumer }.into());
        }
        let mut eligible = d.eligible.clone();
        eligible.sort();
        eligible.dedup();
        let mut vars = Vec::with_capacity(eligible.len());
        for location in eligible {
            let v = variables.len();
            let path = net.path(location, d.consumer).to_vec();
            for l in &path {
                on_link[l.0].push(v);
            }
            variables.push(LpVariable {
                key: FlowKey { provider: d.provider, consumer: d.consumer, location },
                upper: d.volume,
                path,
            });
            vars.push(v);
        }
        demand_rows.push(DemandRow { key: (d.provider, d.consumer), volume: d.volume, vars });
    }

    let mut link_rows = Vec::new();
    let mut fixed_floor: f64 = 0.0;
    for (e, vars) in on_link.into_iter().enumerate() {
        let link = LinkId(e);
        if vars.is_empty() {
            fixed_floor = fixed_floor.max(fixed_state.utilization(link));
        } else {
            link_rows.push(LinkRow { link, capacity: fixed_state.capacity(link), fixed: fixed_state.load(link), vars });
        }
    }
    Ok(LpInstance { bin: bin.bin, variables, demand_rows, link_rows, fixed_floor, fixed, fixed_state })
}

/// Evidence that the returned L* is optimal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpCertificate {
    /// Largest violation of a demand, bound or link constraint by f*.
    pub primal_residual: f64,
    /// Largest violation of dual feasibility on the original data.
    pub dual_infeasibility: f64,
    /// Lower bound on L proven by the dual multipliers.
    pub dual_bound: f64,
    pub pivots: usize,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub l_star: f64,
    /// Fixed placement plus the optimal adjustable flows.
    pub assignment: FlowAssignment,
    pub state: LinkLoadState,
    pub certificate: LpCertificate,
}

fn diagnostics(instance: &LpInstance, lp: &StandardLp, pivots: Option<usize>) -> String {
    let (lo, hi) =
        lp.a.iter()
            .filter(|v| **v != 0.0)
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v.abs()), hi.max(v.abs())));
    let mut out = format!(
        "{} rows, {} columns, {} flow variables, |coef| in [{lo:e}, {hi:e}], ratio {:e}",
        lp.rows,
        lp.cols,
        instance.variables.len(),
        if lo > 0.0 { hi / lo } else { f64::NAN }
    );
    if let Some(p) = pivots {
        let _ = write!(out, ", {p} pivots");
    }
    out
}

/// Solves `instance` and certifies the optimum to within `tolerance`.
pub fn solve_lp(instance: &LpInstance, tolerance: f64) -> Result<LpSolution, LpError> {
    let nv = instance.variables.len();
    if nv > MAX_LP_VARIABLES {
        return Err(LpError::TooLarge { variables: nv, limit: MAX_LP_VARIABLES });
    }
    let tolerance = tolerance.max(1e-12);

    // columns: f_0..f_{nv-1}, L, one surplus per link row, one for the floor
    let l_col = nv;
    let has_floor = instance.fixed_floor > 0.0;
    let cols = nv + 1 + instance.link_rows.len() + usize::from(has_floor);
    let rows = instance.demand_rows.len() + instance.link_rows.len() + usize::from(has_floor);
    let mut a = vec![0.0; rows * cols];
    let mut b = vec![0.0; rows];
    let mut r = 0;
    for d in &instance.demand_rows {
        for &v in &d.vars {
            a[r * cols + v] = 1.0;
        }
        b[r] = d.volume;
        r += 1;
    }
    for (k, row) in instance.link_rows.iter().enumerate() {
        a[r * cols + l_col] = 1.0;
        for &v in &row.vars {
            a[r * cols + v] -= 1.0 / row.capacity;
        }
        a[r * cols + nv + 1 + k] = -1.0;
        b[r] = row.fixed / row.capacity;
        r += 1;
    }
    if has_floor {
        a[r * cols + l_col] = 1.0;
        a[r * cols + cols - 1] = -1.0;
        b[r] = instance.fixed_floor;
    }
    let mut c = vec![0.0; cols];
    c[l_col] = 1.0;
    let lp = StandardLp { rows, cols, a, b, c };

    let result = simplex::solve(&lp, tolerance * 1e-3).map_err(|e| {
        let reason = match e {
            SimplexError::Infeasible { residual } => format!("phase one ended with residual {residual:e}"),
            SimplexError::Unbounded { column } => format!("unbounded direction on column {column}"),
            SimplexError::IterationLimit { pivots } => format!("iteration limit after {pivots} pivots"),
        };
        LpError::Numerical { reason, diagnostics: diagnostics(instance, &lp, None) }
    })?;

    let mut dual_infeasibility: f64 = 0.0;
    for j in 0..cols {
        let reduced = lp.c[j] - (0..rows).map(|i| result.duals[i] * lp.a[i * cols + j]).sum::<f64>();
        dual_infeasibility = dual_infeasibility.max(-reduced);
    }
    let dual_bound: f64 = result.duals.iter().zip(&lp.b).map(|(y, b)| y * b).sum();

    // clean up rounding: clamp and rescale each demand's split to sum exactly
    let mut assignment = instance.fixed.clone();
    let mut state = instance.fixed_state.clone();
    let mut primal_residual: f64 = 0.0;
    for d in &instance.demand_rows {
        let raw: Vec<f64> = d.vars.iter().map(|&v| result.x[v]).collect();
        let sum: f64 = raw.iter().sum();
        primal_residual = primal_residual.max((sum - d.volume).abs());
        for (&v, &x) in d.vars.iter().zip(&raw) {
            primal_residual = primal_residual.max(-x).max(x - instance.variables[v].upper);
        }
        let clean: Vec<f64> = raw.iter().map(|x| x.max(0.0)).collect();
        let clean_sum: f64 = clean.iter().sum();
        for (&v, &x) in d.vars.iter().zip(&clean) {
            let volume = if clean_sum > 0.0 { x / clean_sum * d.volume } else { d.volume / d.vars.len() as f64 };
            if volume > 0.0 {
                let var = &instance.variables[v];
                assignment.add(var.key.provider, var.key.consumer, var.key.location, volume);
                state.add_path(&var.path, volume);
            }
        }
    }
    let achieved = state.max_utilization();
    primal_residual = primal_residual.max(achieved - result.objective);

    let scale = result.objective.abs().max(1.0);
    let gap = result.objective - dual_bound;
    if primal_residual > tolerance * scale || dual_infeasibility > tolerance || gap.abs() > tolerance * scale {
        return Err(LpError::Numerical {
            reason: format!(
                "certificate failed: primal residual {primal_residual:e}, dual infeasibility {dual_infeasibility:e}, gap {gap:e}"
            ),
            diagnostics: diagnostics(instance, &lp, Some(result.pivots)),
        });
    }
    Ok(LpSolution {
        l_star: result.objective,
        assignment,
        state,
        certificate: LpCertificate { primal_residual, dual_infeasibility, dual_bound, pivots: result.pivots },
    })
}

fn num(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else {
        v.to_string()
    }
}

fn var_name(var: &LpVariable) -> String {
    format!("f_k{}_j{}_i{}", var.key.provider, var.key.consumer, var.key.location)
}

/// Writes `instance` in free-format MPS. Output depends only on the instance.
pub fn write_mps<W: Write>(instance: &LpInstance, mut out: W) -> io::Result<()> {
    let demand_name = |d: &DemandRow| format!("dem_k{}_j{}", d.key.0, d.key.1);
    let link_name = |row: &LinkRow| format!("link_{}", row.link);
    let mut var_rows: Vec<Vec<(String, f64)>> = vec![Vec::new(); instance.variables.len()];

    writeln!(out, "NAME bin{}", instance.bin)?;
    writeln!(out, "ROWS")?;
    writeln!(out, " N obj")?;
    for d in &instance.demand_rows {
        writeln!(out, " E {}", demand_name(d))?;
        for &v in &d.vars {
            var_rows[v].push((demand_name(d), 1.0));
        }
    }
    for row in &instance.link_rows {
        writeln!(out, " L {}", link_name(row))?;
        for &v in &row.vars {
            var_rows[v].push((link_name(row), 1.0 / row.capacity));
        }
    }
    if instance.fixed_floor > 0.0 {
        writeln!(out, " G fixed_floor")?;
    }
    writeln!(out, "COLUMNS")?;
    for (var, rows) in instance.variables.iter().zip(&var_rows) {
        let name = var_name(var);
        for (row, coef) in rows {
            writeln!(out, " {name} {row} {}", num(*coef))?;
        }
    }
    writeln!(out, " L obj 1")?;
    for row in &instance.link_rows {
        writeln!(out, " L {} -1", link_name(row))?;
    }
    if instance.fixed_floor > 0.0 {
        writeln!(out, " L fixed_floor 1")?;
    }
    writeln!(out, "RHS")?;
    for d in &instance.demand_rows {
        writeln!(out, " rhs {} {}", demand_name(d), num(d.volume))?;
    }
    for row in &instance.link_rows {
        if row.fixed != 0.0 {
            writeln!(out, " rhs {} {}", link_name(row), num(-row.fixed / row.capacity))?;
        }
    }
    if instance.fixed_floor > 0.0 {
        writeln!(out, " rhs fixed_floor {}", num(instance.fixed_floor))?;
    }
    writeln!(out, "BOUNDS")?;
    for var in &instance.variables {
        writeln!(out, " UP bnd {} {}", var_name(var), num(var.upper))?;
    }
    writeln!(out, "ENDATA")?;
    Ok(())
}
