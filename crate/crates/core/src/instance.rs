//! Task-erased instances, the per-episode oracle session, and the instance
//! file format.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::hill::HillInstance;
use crate::query::{Feedback, InvalidQuery, NodeId, Query, Task};
use crate::rng::{derived_rng, stream, BenchRng};
use crate::sat::SatInstance;
use crate::tree::{ExplorationFrontier, TreeInstance, TreeStructure};

pub const INSTANCE_FORMAT: &str = "explore-bench-instance";
pub const INSTANCE_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum InstanceError {
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid instance file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported instance file (format `{format}`, version {version})")]
    Format { format: String, version: u32 },
    #[error("instance failed validation: {0}")]
    Invalid(String),
    #[error("this file is a public projection and holds no hidden values")]
    PublicOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", content = "instance", rename_all = "snake_case")]
pub enum Instance {
    Hill(HillInstance),
    Tree(TreeInstance),
    Sat(SatInstance),
}

/// What an agent is allowed to know about an instance before querying.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum PublicInfo {
    Hill {
        lo: f64,
        hi: f64,
    },
    Tree {
        #[serde(flatten)]
        structure: TreeStructure,
        root_value: i64,
    },
    Sat {
        n: u32,
        m: u32,
        max_arity: u32,
    },
}

impl PublicInfo {
    pub fn task(&self) -> Task {
        match self {
            PublicInfo::Hill { .. } => Task::Hill,
            PublicInfo::Tree { .. } => Task::Tree,
            PublicInfo::Sat { .. } => Task::Sat,
        }
    }
}

impl Instance {
    pub fn task(&self) -> Task {
        match self {
            Instance::Hill(_) => Task::Hill,
            Instance::Tree(_) => Task::Tree,
            Instance::Sat(_) => Task::Sat,
        }
    }

    /// Maximum achievable raw reward, the normalization denominator.
    pub fn max_reward(&self) -> f64 {
        match self {
            Instance::Hill(h) => h.global_max(),
            Instance::Tree(t) => t.max_value() as f64,
            Instance::Sat(s) => f64::from(s.m()),
        }
    }

    pub fn public(&self) -> PublicInfo {
        match self {
            Instance::Hill(_) => PublicInfo::Hill {
                lo: crate::hill::DOMAIN_LO,
                hi: crate::hill::DOMAIN_HI,
            },
            Instance::Tree(t) => PublicInfo::Tree {
                structure: t.structure(),
                root_value: 0,
            },
            Instance::Sat(s) => PublicInfo::Sat {
                n: s.n(),
                m: s.m(),
                max_arity: s.max_arity(),
            },
        }
    }

    /// Content hash of the canonical serialization, first 16 hex digits.
    pub fn id(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("instances serialize");
        let digest = Sha256::digest(&bytes);
        hex::encode(&digest[..8])
    }

    /// Pure oracle evaluation that ignores exploration state (used by replay
    /// checks). Tree queries only need the node to exist.
    pub fn raw_reward(&self, query: &Query) -> Result<f64, InvalidQuery> {
        match (self, query) {
            (Instance::Hill(h), Query::Hill { x }) => h.eval_f(*x),
            (Instance::Tree(t), Query::Tree { node }) => {
                t.value(*node).map(|v| v as f64).ok_or(InvalidQuery::UnknownNode(*node))
            }
            (Instance::Sat(s), Query::Sat { bits }) => s.count_satisfied(bits).map(f64::from),
            (inst, q) => Err(InvalidQuery::WrongTask {
                got: q.task(),
                expected: inst.task(),
            }),
        }
    }

    fn check(&self) -> Result<(), String> {
        match self {
            Instance::Hill(h) => {
                let rebuilt = HillInstance::from_hills(
                    h.hills().to_vec(),
                    h.needle_index(),
                    h.needle_grid_index(),
                    h.params().copied(),
                )
                .map_err(|e| e.to_string())?;
                if (rebuilt.global_max() - h.global_max()).abs() > 1e-9 {
                    return Err("cached global maximum is stale".into());
                }
                Ok(())
            }
            Instance::Tree(t) => t.check(),
            Instance::Sat(s) => s.check(),
        }
    }
}

/// One episode's view of the oracle. Holds the tree frontier and the
/// availability-shuffle stream; hill and sat sessions are stateless.
#[derive(Debug, Clone)]
pub struct Environment<'a> {
    instance: &'a Instance,
    frontier: Option<ExplorationFrontier>,
    rng: BenchRng,
}

impl<'a> Environment<'a> {
    pub fn new(instance: &'a Instance, episode_seed: u64) -> Self {
        let frontier = match instance {
            Instance::Tree(t) => Some(ExplorationFrontier::new(t)),
            _ => None,
        };
        Environment {
            instance,
            frontier,
            rng: derived_rng(episode_seed, stream::ENVIRONMENT),
        }
    }

    pub fn instance(&self) -> &'a Instance {
        self.instance
    }

    pub fn frontier(&self) -> Option<&ExplorationFrontier> {
        self.frontier.as_ref()
    }

    /// Valid nodes before the first query, shuffled (tree only).
    pub fn initial_available(&mut self) -> Option<Vec<NodeId>> {
        let f = self.frontier.as_ref()?;
        Some(f.availability_feedback(&mut self.rng).0)
    }

    /// Validates and answers one query. Invalid queries leave the session
    /// untouched.
    pub fn evaluate(&mut self, query: &Query) -> Result<Feedback, InvalidQuery> {
        match (self.instance, query) {
            (Instance::Hill(h), Query::Hill { x }) => Ok(Feedback::Hill { value: h.eval_f(*x)? }),
            (Instance::Sat(s), Query::Sat { bits }) => Ok(Feedback::Sat {
                satisfied: s.count_satisfied(bits)?,
            }),
            (Instance::Tree(t), Query::Tree { node }) => {
                let frontier = self.frontier.as_ref().expect("tree sessions hold a frontier");
                let (value, next) = frontier.query_node(t, *node)?;
                let (available, exposed_new) = next.availability_feedback(&mut self.rng);
                self.frontier = Some(next);
                Ok(Feedback::Tree {
                    value,
                    available,
                    exposed_new,
                })
            }
            (inst, q) => Err(InvalidQuery::WrongTask {
                got: q.task(),
                expected: inst.task(),
            }),
        }
    }
}

/// On-disk envelope. `secret` marks files holding hidden ground truth.
#[derive(Debug, Serialize, Deserialize)]
struct InstanceFile {
    format: String,
    version: u32,
    secret: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    preset: Option<String>,
    #[serde(flatten)]
    body: FileBody,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum FileBody {
    Full(Instance),
    Public { public: PublicInfo },
}

pub fn instance_to_string(instance: &Instance, preset: Option<&str>) -> String {
    let file = InstanceFile {
        format: INSTANCE_FORMAT.to_string(),
        version: INSTANCE_VERSION,
        secret: true,
        preset: preset.map(str::to_string),
        body: FileBody::Full(instance.clone()),
    };
    serde_json::to_string_pretty(&file).expect("instances serialize") + "\n"
}

/// Agent-facing projection: structure only, no values or ground truth.
pub fn public_to_string(instance: &Instance) -> String {
    let file = InstanceFile {
        format: INSTANCE_FORMAT.to_string(),
        version: INSTANCE_VERSION,
        secret: false,
        preset: None,
        body: FileBody::Public {
            public: instance.public(),
        },
    };
    serde_json::to_string_pretty(&file).expect("public info serializes") + "\n"
}

pub fn instance_from_str(text: &str) -> Result<Instance, InstanceError> {
    let file: InstanceFile = serde_json::from_str(text)?;
    if file.format != INSTANCE_FORMAT || file.version != INSTANCE_VERSION {
        return Err(InstanceError::Format {
            format: file.format,
            version: file.version,
        });
    }
    match file.body {
        FileBody::Full(inst) => {
            inst.check().map_err(InstanceError::Invalid)?;
            Ok(inst)
        }
        FileBody::Public { .. } => Err(InstanceError::PublicOnly),
    }
}

pub fn write_instance(path: &Path, instance: &Instance, preset: Option<&str>) -> Result<(), InstanceError> {
    std::fs::write(path, instance_to_string(instance, preset)).map_err(|source| InstanceError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_instance(path: &Path) -> Result<Instance, InstanceError> {
    let text = std::fs::read_to_string(path).map_err(|source| InstanceError::Io {
        path: path.display().to_string(),
        source,
    })?;
    instance_from_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sat::{generate_sat, SatGenParams};
    use crate::tree::{generate_tree, TreeGenParams};

    fn small_tree() -> Instance {
        Instance::Tree(
            generate_tree(&TreeGenParams {
                r_trap: 1,
                r_good: 1,
                fanout: 2,
                d_trap: 4,
                d_good: 3,
                seed: 5,
            })
            .unwrap(),
        )
    }

    #[test]
    fn file_round_trip_preserves_instances() {
        let sat = Instance::Sat(
            generate_sat(&SatGenParams {
                n: 8,
                m: 20,
                k_gold: 3,
                k_other: 2,
                w_gold: 10,
                seed: 2,
            })
            .unwrap(),
        );
        for inst in [Instance::Hill(HillInstance::evaluated()), small_tree(), sat] {
            let text = instance_to_string(&inst, Some("x"));
            assert!(text.contains("\"secret\": true"));
            let back = instance_from_str(&text).unwrap();
            assert_eq!(back, inst);
            assert_eq!(back.id(), inst.id());
        }
    }

    #[test]
    fn public_projection_hides_values() {
        let inst = small_tree();
        let text = public_to_string(&inst);
        assert!(text.contains("\"secret\": false"));
        assert!(!text.contains("values"));
        assert!(matches!(instance_from_str(&text), Err(InstanceError::PublicOnly)));
    }

    #[test]
    fn tampered_file_is_rejected() {
        let inst = small_tree();
        let text = instance_to_string(&inst, None).replace("\"max_value\": 9", "\"max_value\": 99");
        assert!(matches!(instance_from_str(&text), Err(InstanceError::Invalid(_))));
    }

    #[test]
    fn wrong_task_query_is_invalid() {
        let inst = Instance::Hill(HillInstance::evaluated());
        let mut env = Environment::new(&inst, 0);
        assert!(matches!(
            env.evaluate(&Query::Tree { node: 0 }),
            Err(InvalidQuery::WrongTask { .. })
        ));
    }
}
