//! Incremental SAT session over the `batsat` CDCL solver.

use std::fmt::Write as _;

use batsat::{lbool, Callbacks, SolverInterface, SolverOpts};
use web_time::{Duration, Instant};

use crate::cnf::{ClauseSink, Lit, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveResult {
    Sat,
    Unsat,
    Timeout,
}

#[derive(Debug, Default)]
struct Deadline {
    until: Option<Instant>,
}

impl Callbacks for Deadline {
    fn stop(&self) -> bool {
        self.until.is_some_and(|u| Instant::now() >= u)
    }
}

/// Grow-only clause store with assumption-based solving. Clauses are never
/// removed; conditional constraints use activation literals instead.
pub struct SolverSession {
    solver: batsat::Solver<Deadline>,
    num_vars: u32,
    vars: Vec<batsat::Var>,
    record: Option<Vec<Vec<Lit>>>,
    solve_timeout: Option<Duration>,
    attack_deadline: Option<Instant>,
    model: Vec<bool>,
    solves: u64,
}

impl std::fmt::Debug for SolverSession {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SolverSession")
            .field("num_vars", &self.num_vars)
            .field("solves", &self.solves)
            .finish()
    }
}

impl Default for SolverSession {
    fn default() -> Self {
        Self::new()
    }
}

impl SolverSession {
    pub fn new() -> Self {
        Self {
            solver: batsat::Solver::new(SolverOpts::default(), Deadline::default()),
            num_vars: 0,
            vars: Vec::new(),
            record: None,
            solve_timeout: None,
            attack_deadline: None,
            model: Vec::new(),
            solves: 0,
        }
    }

    /// Keep a copy of every clause for [`SolverSession::to_dimacs`].
    pub fn with_recording(mut self) -> Self {
        self.record = Some(Vec::new());
        self
    }

    pub fn set_solve_timeout(&mut self, t: Option<Duration>) {
        self.solve_timeout = t;
    }

    /// Absolute cap shared by every later solve.
    pub fn set_deadline(&mut self, at: Option<Instant>) {
        self.attack_deadline = at;
    }

    pub fn deadline_passed(&self) -> bool {
        self.attack_deadline.is_some_and(|d| Instant::now() >= d)
    }

    pub fn num_vars(&self) -> u32 {
        self.num_vars
    }

    pub fn num_clauses(&self) -> u64 {
        self.solver.num_clauses()
    }

    pub fn solves(&self) -> u64 {
        self.solves
    }

    fn to_bs(&self, l: Lit) -> batsat::Lit {
        batsat::Lit::new(self.vars[l.var().0 as usize], !l.is_negated())
    }

    pub fn solve(&mut self, assumptions: &[Lit]) -> SolveResult {
        let per_solve = self.solve_timeout.map(|t| Instant::now() + t);
        let until = match (per_solve, self.attack_deadline) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        self.solver.cb_mut().until = until;
        let assumps: Vec<batsat::Lit> = assumptions.iter().map(|&l| self.to_bs(l)).collect();
        self.solves += 1;
        let r = self.solver.solve_limited(&assumps);
        if r == lbool::TRUE {
            self.model = self
                .vars
                .iter()
                .map(|&v| self.solver.value_var(v) == lbool::TRUE)
                .collect();
            SolveResult::Sat
        } else if r == lbool::FALSE {
            SolveResult::Unsat
        } else {
            SolveResult::Timeout
        }
    }

    /// Value of `l` in the last satisfying assignment.
    pub fn value(&self, l: Lit) -> bool {
        self.model.get(l.var().0 as usize).copied().unwrap_or(false) ^ l.is_negated()
    }

    pub fn recorded_clauses(&self) -> Option<&[Vec<Lit>]> {
        self.record.as_deref()
    }

    /// DIMACS dump of all recorded clauses, or `None` when recording is off.
    pub fn to_dimacs(&self) -> Option<String> {
        let clauses = self.record.as_ref()?;
        let mut out = String::new();
        let _ = writeln!(out, "p cnf {} {}", self.num_vars, clauses.len());
        for c in clauses {
            for l in c {
                let _ = write!(out, "{} ", l.to_dimacs());
            }
            out.push_str("0\n");
        }
        Some(out)
    }
}

impl ClauseSink for SolverSession {
    fn new_var(&mut self) -> Var {
        let v = self.solver.new_var_default();
        self.vars.push(v);
        self.num_vars += 1;
        Var(self.num_vars - 1)
    }

    fn add_clause(&mut self, lits: &[Lit]) {
        if let Some(r) = &mut self.record {
            r.push(lits.to_vec());
        }
        let mut c: Vec<batsat::Lit> = lits.iter().map(|&l| self.to_bs(l)).collect();
        self.solver.add_clause_reuse(&mut c);
    }
}
