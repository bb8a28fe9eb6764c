//! Declarative multi-enclave programs for the explorer.
//!
//! A program is a set of per-actor instruction lists plus optional
//! adversaries with wildcard budgets. Region arguments are symbolic names
//! bound when the corresponding create executes, so a step may only
//! reference regions introduced earlier in the program.
//!
//! The line-oriented file format:
//!
//! ```text
//! # comment
//! enclave E1
//! adversary E3 budget 4
//! max-depth 14
//! setup E1 create 16 as R1
//! setup E1 share R1 E2 rw-l
//! step  E2 change R1 rw-l
//! step  E2 write R1 0xaa
//! check lock-exclusivity bounded-escalation
//! property serialization source=E1 proxy=E2 dest=E3 region=R1
//! ```

use std::collections::BTreeSet;
use std::fmt;

use crate::model::{EnclaveId, MachineConfig, Permission, SignalKind, Uid};

/// Index into the program's region-name table.
pub type NameIdx = usize;

/// A region argument: a symbolic name bound when its create executes, or a
/// concrete uid (adversary wildcards operate on live uids directly, since
/// uids are public identifiers in the global namespace).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionRef {
    Name(NameIdx),
    Uid(Uid),
}

impl From<Uid> for RegionRef {
    fn from(u: Uid) -> Self {
        RegionRef::Uid(u)
    }
}

/// One instruction with symbolic region arguments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Instr {
    Create {
        size: u64,
        bind: NameIdx,
    },
    Map {
        region: RegionRef,
        vaddr: u64,
    },
    Unmap {
        region: RegionRef,
        vaddr: u64,
    },
    Share {
        region: RegionRef,
        to: EnclaveId,
        max: Permission,
    },
    Change {
        region: RegionRef,
        perm: Permission,
    },
    Destroy {
        region: RegionRef,
    },
    Transfer {
        region: RegionRef,
        to: EnclaveId,
    },
    /// Read the whole region through the actor's mapping of it.
    Read {
        region: RegionRef,
    },
    /// Fill the whole region with one byte through the actor's mapping.
    Write {
        region: RegionRef,
        byte: u8,
    },
    Poll,
    Mask {
        kinds: BTreeSet<SignalKind>,
    },
}

/// Renders an instruction with the program's name table.
pub fn render_instr(instr: &Instr, names: &[String]) -> String {
    let n = |r: &RegionRef| match r {
        RegionRef::Name(i) if *i == usize::MAX => "_".to_string(),
        RegionRef::Name(i) => names.get(*i).cloned().unwrap_or_else(|| format!("?{i}")),
        RegionRef::Uid(u) => format!("uid{u}"),
    };
    match instr {
        Instr::Create { size, bind } => {
            format!("create {} as {}", size, n(&RegionRef::Name(*bind)))
        }
        Instr::Map { region, vaddr } => format!("map {} {vaddr:#x}", n(region)),
        Instr::Unmap { region, vaddr } => format!("unmap {} {vaddr:#x}", n(region)),
        Instr::Share { region, to, max } => format!("share {} {to} {max}", n(region)),
        Instr::Change { region, perm } => format!("change {} {perm}", n(region)),
        Instr::Destroy { region } => format!("destroy {}", n(region)),
        Instr::Transfer { region, to } => format!("transfer {} {to}", n(region)),
        Instr::Read { region } => format!("read {}", n(region)),
        Instr::Write { region, byte } => format!("write {} {byte:#04x}", n(region)),
        Instr::Poll => "poll".to_string(),
        Instr::Mask { kinds } => {
            let list: Vec<String> = kinds.iter().map(|k| k.to_string()).collect();
            format!("mask {}", list.join("|"))
        }
    }
}

/// Invariants the explorer evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Check {
    /// Structural state invariants (matrix references, memory domains,
    /// mapping disjointness) and dynamic ≤ static for every entry.
    StateWellformed,
    /// At most one lock holder per region.
    LockExclusivity,
    /// Static maximum never changes after entry creation.
    MaxImmutable,
    /// Failed instructions leave the state bit-identical.
    Atomicity,
    /// No access outcome ever exceeds what the owner granted.
    BoundedEscalation,
    /// No adversary access succeeds inside a lock-serialized chain.
    Serialization,
}

impl Check {
    pub fn name(self) -> &'static str {
        match self {
            Check::StateWellformed => "state-wellformed",
            Check::LockExclusivity => "lock-exclusivity",
            Check::MaxImmutable => "max-immutable",
            Check::Atomicity => "atomicity",
            Check::BoundedEscalation => "bounded-escalation",
            Check::Serialization => "serialization",
        }
    }

    pub fn parse(s: &str) -> Result<Check, String> {
        match s {
            "state-wellformed" => Ok(Check::StateWellformed),
            "lock-exclusivity" => Ok(Check::LockExclusivity),
            "max-immutable" => Ok(Check::MaxImmutable),
            "atomicity" => Ok(Check::Atomicity),
            "bounded-escalation" => Ok(Check::BoundedEscalation),
            "serialization" => Ok(Check::Serialization),
            _ => Err(format!("unknown check {s:?}")),
        }
    }

    /// Everything except serialization, which needs role annotations.
    pub fn default_set() -> BTreeSet<Check> {
        BTreeSet::from([
            Check::StateWellformed,
            Check::LockExclusivity,
            Check::MaxImmutable,
            Check::Atomicity,
            Check::BoundedEscalation,
        ])
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Role annotations for the serialization property: the honest chain and
/// the region whose accesses it serializes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SerializationSpec {
    pub source: EnclaveId,
    pub chain: Vec<EnclaveId>,
    pub dest: EnclaveId,
    pub region: NameIdx,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActorProgram {
    pub actor: EnclaveId,
    pub steps: Vec<Instr>,
}

/// A complete exploration problem.
#[derive(Debug, Clone)]
pub struct ExplorationConfig {
    pub machine: MachineConfig,
    pub enclaves: Vec<EnclaveId>,
    /// Region names; instructions reference regions by index here.
    pub names: Vec<String>,
    /// Executed sequentially before exploration begins.
    pub setup: Vec<(EnclaveId, Instr)>,
    pub actors: Vec<ActorProgram>,
    /// Wildcard actors and their step budgets.
    pub adversaries: Vec<(EnclaveId, u32)>,
    pub max_depth: usize,
    pub checks: BTreeSet<Check>,
    pub serialization: Option<SerializationSpec>,
    /// Stop recording further violation traces past this count.
    pub max_violations: usize,
}

impl ExplorationConfig {
    pub fn new() -> Self {
        ExplorationConfig {
            machine: MachineConfig::default(),
            enclaves: Vec::new(),
            names: Vec::new(),
            setup: Vec::new(),
            actors: Vec::new(),
            adversaries: Vec::new(),
            max_depth: 14,
            checks: Check::default_set(),
            serialization: None,
            max_violations: 16,
        }
    }

    pub fn name_idx(&mut self, name: &str) -> NameIdx {
        if let Some(i) = self.names.iter().position(|n| n == name) {
            i
        } else {
            self.names.push(name.to_string());
            self.names.len() - 1
        }
    }

    /// Parses the line-oriented program format.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut cfg = ExplorationConfig::new();
        let mut actor_order: Vec<EnclaveId> = Vec::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| format!("line {}: {msg}", no + 1);
            let mut tok = line.split_whitespace();
            match tok.next().unwrap() {
                "enclave" => {
                    let id: EnclaveId = tok
                        .next()
                        .ok_or_else(|| err("enclave needs an id".into()))?
                        .parse()
                        .map_err(err)?;
                    cfg.enclaves.push(id);
                }
                "adversary" => {
                    let id: EnclaveId = tok
                        .next()
                        .ok_or_else(|| err("adversary needs an id".into()))?
                        .parse()
                        .map_err(err)?;
                    let budget = match (tok.next(), tok.next()) {
                        (Some("budget"), Some(b)) => {
                            b.parse().map_err(|e| err(format!("bad budget: {e}")))?
                        }
                        (Some(b), None) => {
                            b.parse().map_err(|e| err(format!("bad budget: {e}")))?
                        }
                        _ => return Err(err("adversary <id> budget <n>".into())),
                    };
                    if !cfg.enclaves.contains(&id) && id != crate::model::OS_ID {
                        cfg.enclaves.push(id);
                    }
                    cfg.adversaries.push((id, budget));
                }
                "max-depth" => {
                    cfg.max_depth = tok
                        .next()
                        .ok_or_else(|| err("max-depth needs a value".into()))?
                        .parse()
                        .map_err(|e| err(format!("bad depth: {e}")))?;
                }
                "check" => {
                    let mut set = BTreeSet::new();
                    for name in tok {
                        set.insert(Check::parse(name).map_err(err)?);
                    }
                    if set.is_empty() {
                        return Err(err("check needs at least one name".into()));
                    }
                    cfg.checks = set;
                }
                "property" => {
                    let kind = tok.next().ok_or_else(|| err("property kind".into()))?;
                    if kind != "serialization" {
                        return Err(err(format!("unknown property {kind:?}")));
                    }
                    let mut source = None;
                    let mut chain = Vec::new();
                    let mut dest = None;
                    let mut region = None;
                    for kv in tok {
                        let (k, v) = kv
                            .split_once('=')
                            .ok_or_else(|| err(format!("expected key=value, got {kv:?}")))?;
                        match k {
                            "source" => source = Some(v.parse().map_err(err)?),
                            "proxy" => chain.push(v.parse().map_err(err)?),
                            "dest" => dest = Some(v.parse().map_err(err)?),
                            "region" => region = Some(cfg.name_idx(v)),
                            _ => return Err(err(format!("unknown property key {k:?}"))),
                        }
                    }
                    cfg.serialization = Some(SerializationSpec {
                        source: source.ok_or_else(|| err("serialization needs source=".into()))?,
                        chain,
                        dest: dest.ok_or_else(|| err("serialization needs dest=".into()))?,
                        region: region.ok_or_else(|| err("serialization needs region=".into()))?,
                    });
                    cfg.checks.insert(Check::Serialization);
                }
                section @ ("setup" | "step") => {
                    let actor: EnclaveId = tok
                        .next()
                        .ok_or_else(|| err(format!("{section} needs an actor")))?
                        .parse()
                        .map_err(err)?;
                    let rest: Vec<&str> = tok.collect();
                    let instr = parse_instr(&rest, &mut cfg).map_err(err)?;
                    if section == "setup" {
                        cfg.setup.push((actor, instr));
                    } else {
                        match actor_order.iter().position(|a| *a == actor) {
                            Some(i) => cfg.actors[i].steps.push(instr),
                            None => {
                                actor_order.push(actor);
                                cfg.actors.push(ActorProgram {
                                    actor,
                                    steps: vec![instr],
                                });
                            }
                        }
                    }
                }
                other => return Err(err(format!("unknown directive {other:?}"))),
            }
        }
        Ok(cfg)
    }
}

impl Default for ExplorationConfig {
    fn default() -> Self {
        Self::new()
    }
}

fn parse_u64(s: &str) -> Result<u64, String> {
    if let Some(hex) = s.strip_prefix("0x") {
        u64::from_str_radix(hex, 16).map_err(|e| e.to_string())
    } else {
        s.parse()
            .map_err(|e: std::num::ParseIntError| e.to_string())
    }
}

fn parse_instr(tokens: &[&str], cfg: &mut ExplorationConfig) -> Result<Instr, String> {
    let get = |i: usize| -> Result<&str, String> {
        tokens
            .get(i)
            .copied()
            .ok_or_else(|| "missing argument".to_string())
    };
    match get(0)? {
        "create" => {
            let size = parse_u64(get(1)?)?;
            if get(2)? != "as" {
                return Err("create <size> as <name>".into());
            }
            let bind = cfg.name_idx(get(3)?);
            Ok(Instr::Create { size, bind })
        }
        "map" => Ok(Instr::Map {
            region: RegionRef::Name(cfg.name_idx(get(1)?)),
            vaddr: parse_u64(get(2)?)?,
        }),
        "unmap" => Ok(Instr::Unmap {
            region: RegionRef::Name(cfg.name_idx(get(1)?)),
            vaddr: parse_u64(get(2)?)?,
        }),
        "share" => Ok(Instr::Share {
            region: RegionRef::Name(cfg.name_idx(get(1)?)),
            to: get(2)?.parse()?,
            max: get(3)?.parse()?,
        }),
        "change" => Ok(Instr::Change {
            region: RegionRef::Name(cfg.name_idx(get(1)?)),
            perm: get(2)?.parse()?,
        }),
        "destroy" => Ok(Instr::Destroy {
            region: RegionRef::Name(cfg.name_idx(get(1)?)),
        }),
        "transfer" => Ok(Instr::Transfer {
            region: RegionRef::Name(cfg.name_idx(get(1)?)),
            to: get(2)?.parse()?,
        }),
        "read" => Ok(Instr::Read {
            region: RegionRef::Name(cfg.name_idx(get(1)?)),
        }),
        "write" => Ok(Instr::Write {
            region: RegionRef::Name(cfg.name_idx(get(1)?)),
            byte: parse_u64(get(2)?)? as u8,
        }),
        "poll" => Ok(Instr::Poll),
        "mask" => {
            let mut kinds = BTreeSet::new();
            if let Ok(list) = get(1) {
                for k in list.split('|').filter(|s| !s.is_empty()) {
                    kinds.insert(k.parse::<SignalKind>()?);
                }
            }
            Ok(Instr::Mask { kinds })
        }
        other => Err(format!("unknown instruction {other:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_program_file() {
        let text = "\
# two enclaves, one adversary
enclave E1
enclave E2
adversary E3 budget 4
max-depth 12
setup E1 create 16 as R1
setup E1 share R1 E2 rw-l
step E2 change R1 rw-l
step E2 write R1 0xaa
property serialization source=E1 dest=E2 region=R1
";
        let cfg = ExplorationConfig::parse(text).unwrap();
        assert_eq!(cfg.enclaves.len(), 3);
        assert_eq!(cfg.adversaries, vec![(EnclaveId(3), 4)]);
        assert_eq!(cfg.max_depth, 12);
        assert_eq!(cfg.setup.len(), 2);
        assert_eq!(cfg.actors.len(), 1);
        assert_eq!(cfg.actors[0].steps.len(), 2);
        let ser = cfg.serialization.unwrap();
        assert_eq!(ser.source, EnclaveId(1));
        assert_eq!(ser.dest, EnclaveId(2));
        assert!(cfg.checks.contains(&Check::Serialization));
    }

    #[test]
    fn rejects_unknown_directives() {
        assert!(ExplorationConfig::parse("frobnicate E1").is_err());
        assert!(ExplorationConfig::parse("step E1 teleport R1").is_err());
    }
}
