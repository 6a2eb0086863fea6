//! MaxSatSearch: hidden AND-clauses with a gold clause repeated `w_gold`
//! times over variables that appear nowhere else.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::query::InvalidQuery;
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum SatError {
    #[error("n must be positive")]
    NoVariables,
    #[error("m must be positive")]
    NoClauses,
    #[error("k_gold={k_gold} must be between 1 and n={n}")]
    BadGoldArity { k_gold: u32, n: u32 },
    #[error("w_gold={w_gold} must be between 1 and m={m}")]
    BadGoldWeight { w_gold: u32, m: u32 },
    #[error("k_other={k_other} exceeds the {free} non-gold variables")]
    Infeasible { k_other: u32, free: u32 },
    #[error("k_other must be positive when there are non-gold clauses")]
    EmptyOtherClause,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SatGenParams {
    pub n: u32,
    pub m: u32,
    pub k_gold: u32,
    pub k_other: u32,
    pub w_gold: u32,
    pub seed: u64,
}

impl SatGenParams {
    pub fn validate(&self) -> Result<(), SatError> {
        if self.n == 0 {
            return Err(SatError::NoVariables);
        }
        if self.m == 0 {
            return Err(SatError::NoClauses);
        }
        if self.k_gold == 0 || self.k_gold > self.n {
            return Err(SatError::BadGoldArity {
                k_gold: self.k_gold,
                n: self.n,
            });
        }
        if self.w_gold == 0 || self.w_gold > self.m {
            return Err(SatError::BadGoldWeight {
                w_gold: self.w_gold,
                m: self.m,
            });
        }
        if self.m > self.w_gold {
            if self.k_other == 0 {
                return Err(SatError::EmptyOtherClause);
            }
            if self.k_other > self.n - self.k_gold {
                return Err(SatError::Infeasible {
                    k_other: self.k_other,
                    free: self.n - self.k_gold,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Literal {
    pub var: u32,
    /// True for `x_var`, false for `not x_var`.
    pub positive: bool,
}

impl Literal {
    #[inline]
    pub fn holds(&self, x: &[bool]) -> bool {
        x[self.var as usize] == self.positive
    }
}

/// Conjunction of literals: satisfied iff every literal holds.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Clause(pub Vec<Literal>);

impl Clause {
    pub fn is_satisfied(&self, x: &[bool]) -> bool {
        self.0.iter().all(|l| l.holds(x))
    }

    pub fn vars(&self) -> impl Iterator<Item = u32> + '_ {
        self.0.iter().map(|l| l.var)
    }
}

/// A full assignment `x_0 .. x_{n-1}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Assignment(pub Vec<bool>);

impl Assignment {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `0`/`1` characters, `x0` first.
    pub fn bitstring(&self) -> String {
        bitstring(&self.0)
    }

    pub fn flipped(&self, var: usize) -> Assignment {
        let mut bits = self.0.clone();
        bits[var] = !bits[var];
        Assignment(bits)
    }

    pub fn complement(&self) -> Assignment {
        Assignment(self.0.iter().map(|b| !b).collect())
    }
}

pub fn bitstring(bits: &[bool]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SatInstance {
    n: u32,
    /// Gold copies first, then the other clauses.
    clauses: Vec<Clause>,
    gold_vars: Vec<u32>,
    x_star: Assignment,
    w_gold: u32,
    params: Option<SatGenParams>,
}

impl SatInstance {
    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn m(&self) -> u32 {
        self.clauses.len() as u32
    }

    pub fn w_gold(&self) -> u32 {
        self.w_gold
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    pub fn gold_vars(&self) -> &[u32] {
        &self.gold_vars
    }

    pub fn x_star(&self) -> &Assignment {
        &self.x_star
    }

    pub fn params(&self) -> Option<&SatGenParams> {
        self.params.as_ref()
    }

    /// Longest clause, shown to agents as the arity bound.
    pub fn max_arity(&self) -> u32 {
        self.clauses.iter().map(|c| c.0.len() as u32).max().unwrap_or(0)
    }

    /// Oracle: number of clauses whose literals are all true.
    pub fn count_satisfied(&self, x: &[bool]) -> Result<u32, InvalidQuery> {
        if x.len() != self.n as usize {
            return Err(InvalidQuery::WrongLength {
                got: x.len(),
                expected: self.n as usize,
            });
        }
        Ok(self.clauses.iter().filter(|c| c.is_satisfied(x)).count() as u32)
    }

    /// Structural checks used when loading instance files.
    pub fn check(&self) -> Result<(), String> {
        if self.x_star.len() != self.n as usize {
            return Err("x* has the wrong length".into());
        }
        if self.w_gold as usize > self.clauses.len() || self.w_gold == 0 {
            return Err("w_gold out of range".into());
        }
        let gold = &self.clauses[0];
        if self.clauses[..self.w_gold as usize].iter().any(|c| c != gold) {
            return Err("gold copies differ".into());
        }
        for c in &self.clauses[self.w_gold as usize..] {
            if c.vars().any(|v| self.gold_vars.contains(&v)) {
                return Err("non-gold clause mentions a gold variable".into());
            }
        }
        for c in &self.clauses {
            if c.vars().any(|v| v >= self.n) {
                return Err("literal variable out of range".into());
            }
        }
        if self.count_satisfied(&self.x_star.0) != Ok(self.m()) {
            return Err("x* does not satisfy every clause".into());
        }
        Ok(())
    }
}

/// Random stream order: `x*` bits, the gold variable subset, then the
/// variables of each non-gold clause.
pub fn generate_sat(params: &SatGenParams) -> Result<SatInstance, SatError> {
    params.validate()?;
    let mut rng = rng_from_seed(params.seed);
    let n = params.n as usize;
    let x_star: Vec<bool> = (0..n).map(|_| rng.gen::<bool>()).collect();

    let mut gold_vars: Vec<u32> = sample(&mut rng, n, params.k_gold as usize)
        .into_iter()
        .map(|v| v as u32)
        .collect();
    gold_vars.sort_unstable();
    let satisfied_by_star = |v: u32| Literal {
        var: v,
        positive: x_star[v as usize],
    };
    let gold = Clause(gold_vars.iter().map(|&v| satisfied_by_star(v)).collect());

    let free: Vec<u32> = (0..params.n).filter(|v| !gold_vars.contains(v)).collect();
    let mut clauses = vec![gold; params.w_gold as usize];
    for _ in params.w_gold..params.m {
        let lits = sample(&mut rng, free.len(), params.k_other as usize)
            .into_iter()
            .map(|i| satisfied_by_star(free[i]))
            .collect();
        clauses.push(Clause(lits));
    }

    Ok(SatInstance {
        n: params.n,
        clauses,
        gold_vars,
        x_star: Assignment(x_star),
        w_gold: params.w_gold,
        params: Some(*params),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn main_params(seed: u64) -> SatGenParams {
        SatGenParams {
            n: 15,
            m: 120,
            k_gold: 4,
            k_other: 2,
            w_gold: 80,
            seed,
        }
    }

    #[test]
    fn x_star_satisfies_everything() {
        for seed in 0..20 {
            let inst = generate_sat(&main_params(seed)).unwrap();
            assert_eq!(inst.count_satisfied(&inst.x_star().0), Ok(120));
            inst.check().unwrap();
        }
    }

    #[test]
    fn flipping_a_gold_variable_drops_gold_weight() {
        let inst = generate_sat(&main_params(3)).unwrap();
        for &g in inst.gold_vars() {
            let x = inst.x_star().flipped(g as usize);
            assert_eq!(inst.count_satisfied(&x.0), Ok(120 - 80));
        }
    }

    #[test]
    fn complement_satisfies_nothing() {
        let inst = generate_sat(&main_params(5)).unwrap();
        assert_eq!(inst.count_satisfied(&inst.x_star().complement().0), Ok(0));
    }

    #[test]
    fn full_gold_weight_is_all_or_nothing() {
        let p = SatGenParams {
            n: 6,
            m: 10,
            k_gold: 3,
            k_other: 2,
            w_gold: 10,
            seed: 1,
        };
        let inst = generate_sat(&p).unwrap();
        for code in 0u32..64 {
            let x: Vec<bool> = (0..6).map(|i| code >> i & 1 == 1).collect();
            let s = inst.count_satisfied(&x).unwrap();
            assert!(s == 0 || s == 10);
        }
    }

    #[test]
    fn wrong_length_is_invalid() {
        let inst = generate_sat(&main_params(0)).unwrap();
        assert_eq!(
            inst.count_satisfied(&[true; 14]),
            Err(InvalidQuery::WrongLength { got: 14, expected: 15 })
        );
    }

    #[test]
    fn infeasible_parameters() {
        let p = SatGenParams {
            n: 5,
            m: 10,
            k_gold: 4,
            k_other: 2,
            w_gold: 5,
            seed: 0,
        };
        assert_eq!(generate_sat(&p), Err(SatError::Infeasible { k_other: 2, free: 1 }));
        let mut q = main_params(0);
        q.w_gold = 121;
        assert!(matches!(generate_sat(&q), Err(SatError::BadGoldWeight { .. })));
    }

    #[test]
    fn clause_variables_are_distinct() {
        let inst = generate_sat(&main_params(8)).unwrap();
        for c in inst.clauses() {
            let mut vs: Vec<u32> = c.vars().collect();
            vs.sort_unstable();
            vs.dedup();
            assert_eq!(vs.len(), c.0.len());
        }
    }
}
