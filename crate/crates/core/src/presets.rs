//! Named instance configurations: the evaluated instances, difficulty
//! sweeps, and random suites.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::hill::{generate_hill, HillError, HillGenParams, HillInstance};
use crate::instance::Instance;
use crate::query::Task;
use crate::rng::rng_from_seed;
use crate::sat::{generate_sat, SatError, SatGenParams};
use crate::tree::{generate_tree, TreeError, TreeGenParams};

/// Seed used by every generated preset. Changing it changes preset hashes.
pub const PINNED_SEED: u64 = 0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GenError {
    #[error(transparent)]
    Hill(#[from] HillError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Sat(#[from] SatError),
    #[error("unknown preset `{0}`; run with --list to see the available names")]
    UnknownPreset(String),
}

/// Generator parameters of any task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum GenParams {
    Hill(HillGenParams),
    Tree(TreeGenParams),
    Sat(SatGenParams),
}

impl GenParams {
    pub fn task(&self) -> Task {
        match self {
            GenParams::Hill(_) => Task::Hill,
            GenParams::Tree(_) => Task::Tree,
            GenParams::Sat(_) => Task::Sat,
        }
    }

    pub fn generate(&self) -> Result<Instance, GenError> {
        Ok(match self {
            GenParams::Hill(p) => Instance::Hill(generate_hill(p)?),
            GenParams::Tree(p) => Instance::Tree(generate_tree(p)?),
            GenParams::Sat(p) => Instance::Sat(generate_sat(p)?),
        })
    }
}

/// Hand-specified hill instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LiteralHill {
    Main,
    Extra,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PresetSource {
    Literal(LiteralHill),
    Generated(GenParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: String,
    pub task: Task,
    pub source: PresetSource,
}

impl Preset {
    pub fn build(&self) -> Result<Instance, GenError> {
        match self.source {
            PresetSource::Literal(LiteralHill::Main) => Ok(Instance::Hill(HillInstance::evaluated())),
            PresetSource::Literal(LiteralHill::Extra) => Ok(Instance::Hill(HillInstance::evaluated_extra())),
            PresetSource::Generated(p) => p.generate(),
        }
    }
}

pub fn tree_params(r_trap: u32, r_good: u32, fanout: u32, d_trap: u32, d_good: u32) -> TreeGenParams {
    TreeGenParams {
        r_trap,
        r_good,
        fanout,
        d_trap,
        d_good,
        seed: PINNED_SEED,
    }
}

pub fn sat_params(n: u32, m: u32, k_gold: u32, k_other: u32, w_gold: u32) -> SatGenParams {
    SatGenParams {
        n,
        m,
        k_gold,
        k_other,
        w_gold,
        seed: PINNED_SEED,
    }
}

/// Hill difficulty level `k'` (2..=8) with `k = k' - 1`.
pub fn hill_sweep(k_prime: u32) -> HillGenParams {
    HillGenParams::with_levels(k_prime - 1, k_prime, PINNED_SEED)
}

/// Tree difficulty level `r_good` (1..=7).
pub fn tree_sweep(r_good: u32) -> TreeGenParams {
    tree_params(4, r_good, 3, 40, 12)
}

/// Sat difficulty level `k_gold` (1..=7).
pub fn sat_sweep(k_gold: u32) -> SatGenParams {
    let w_gold = 130 + 10 * k_gold;
    sat_params(11 + k_gold, 50 + w_gold, k_gold, 2, w_gold)
}

pub const SWEEP_LEVELS: [(Task, std::ops::RangeInclusive<u32>); 3] =
    [(Task::Hill, 2..=8), (Task::Tree, 1..=7), (Task::Sat, 1..=7)];

pub fn main_preset(task: Task) -> &'static str {
    match task {
        Task::Hill => "hill-main",
        Task::Tree => "tree-main",
        Task::Sat => "sat-main",
    }
}

/// Every preset, evaluated instances first, then the sweeps.
pub fn all_presets() -> Vec<Preset> {
    let mut out = vec![
        Preset {
            name: "hill-main".into(),
            task: Task::Hill,
            source: PresetSource::Literal(LiteralHill::Main),
        },
        Preset {
            name: "hill-extra1".into(),
            task: Task::Hill,
            source: PresetSource::Literal(LiteralHill::Extra),
        },
    ];
    let gen = |name: &str, p: GenParams| Preset {
        name: name.into(),
        task: p.task(),
        source: PresetSource::Generated(p),
    };
    out.push(gen("tree-main", GenParams::Tree(tree_params(3, 3, 5, 40, 12))));
    out.push(gen("tree-extra1", GenParams::Tree(tree_params(2, 2, 3, 40, 14))));
    out.push(gen("tree-extra2", GenParams::Tree(tree_params(4, 4, 4, 40, 16))));
    out.push(gen("sat-main", GenParams::Sat(sat_params(15, 120, 4, 2, 80))));
    out.push(gen("sat-extra1", GenParams::Sat(sat_params(15, 135, 4, 2, 90))));
    out.push(gen("sat-extra2", GenParams::Sat(sat_params(15, 150, 4, 2, 100))));
    out.push(gen("sat-extra3", GenParams::Sat(sat_params(15, 165, 4, 2, 110))));
    for (task, levels) in SWEEP_LEVELS {
        for l in levels {
            out.push(match task {
                Task::Hill => gen(&format!("hill-sweep-k{l}"), GenParams::Hill(hill_sweep(l))),
                Task::Tree => gen(&format!("tree-sweep-r{l}"), GenParams::Tree(tree_sweep(l))),
                Task::Sat => gen(&format!("sat-sweep-k{l}"), GenParams::Sat(sat_sweep(l))),
            });
        }
    }
    out
}

pub fn find_preset(name: &str) -> Result<Preset, GenError> {
    all_presets()
        .into_iter()
        .find(|p| p.name == name)
        .ok_or_else(|| GenError::UnknownPreset(name.to_string()))
}

pub fn build_preset(name: &str) -> Result<Instance, GenError> {
    find_preset(name)?.build()
}

/// One draw from the random-suite ranges of a task. The instance seed is
/// drawn from the same stream, so `seed` alone fixes the instance.
pub fn random_params(task: Task, seed: u64) -> GenParams {
    let mut rng = rng_from_seed(seed);
    match task {
        Task::Hill => {
            let k = rng.gen_range(2..=4);
            let k_prime = k + rng.gen_range(1..=2);
            GenParams::Hill(HillGenParams::with_levels(k, k_prime, rng.gen()))
        }
        Task::Tree => GenParams::Tree(TreeGenParams {
            r_trap: rng.gen_range(1..=4),
            r_good: rng.gen_range(1..=4),
            fanout: rng.gen_range(3..=5),
            d_trap: rng.gen_range(20..=40),
            d_good: rng.gen_range(10..=16),
            seed: rng.gen(),
        }),
        Task::Sat => {
            let n = rng.gen_range(12..=24);
            let k_gold = rng.gen_range(3..=4);
            let k_other = rng.gen_range(2..=6);
            let w_gold = rng.gen_range(60..=160);
            let m_other = rng.gen_range(30..=80);
            GenParams::Sat(SatGenParams {
                n,
                m: w_gold + m_other,
                k_gold,
                k_other,
                w_gold,
                seed: rng.gen(),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique() {
        let names: Vec<String> = all_presets().into_iter().map(|p| p.name).collect();
        let set: std::collections::BTreeSet<&String> = names.iter().collect();
        assert_eq!(set.len(), names.len());
        assert_eq!(names.len(), 9 + 7 + 7 + 7);
    }

    #[test]
    fn sweep_formulas() {
        let s = sat_sweep(4);
        assert_eq!((s.n, s.w_gold, s.m, s.k_other), (15, 170, 220, 2));
        let h = hill_sweep(5);
        assert_eq!((h.k, h.k_prime), (4, 5));
        let t = tree_sweep(7);
        assert_eq!((t.r_trap, t.r_good, t.fanout, t.d_trap, t.d_good), (4, 7, 3, 40, 12));
    }

    #[test]
    fn hill_sweep_counts() {
        let Instance::Hill(h) = build_preset("hill-sweep-k5").unwrap() else {
            panic!("hill preset")
        };
        assert_eq!(h.hills().len(), 16);
    }

    #[test]
    fn random_draws_stay_in_range() {
        for seed in 0..300 {
            match random_params(Task::Sat, seed) {
                GenParams::Sat(p) => {
                    assert!((12..=24).contains(&p.n) && (3..=4).contains(&p.k_gold));
                    assert!((2..=6).contains(&p.k_other) && (60..=160).contains(&p.w_gold));
                    assert!((30..=80).contains(&(p.m - p.w_gold)));
                }
                _ => unreachable!(),
            }
            match random_params(Task::Hill, seed) {
                GenParams::Hill(p) => assert!((2..=4).contains(&p.k) && (p.k + 1..=p.k + 2).contains(&p.k_prime)),
                _ => unreachable!(),
            }
            assert!(random_params(Task::Tree, seed).generate().is_ok());
        }
        assert_eq!(random_params(Task::Tree, 5), random_params(Task::Tree, 5));
    }

    #[test]
    fn unknown_preset() {
        assert!(matches!(build_preset("nope"), Err(GenError::UnknownPreset(_))));
    }
}
