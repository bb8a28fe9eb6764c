//! Machine-parseable transition log.
//!
//! One line per transition, tab-separated, in this field order:
//!
//! ```text
//! step <TAB> caller <TAB> instruction <TAB> arguments <TAB> result <TAB> signals
//! ```
//!
//! `arguments` is a comma-separated `key=value` list; `signals` lists the
//! notifications emitted by the transition as `target:Kind(r=uid,actor=id)`
//! separated by `;`, or `-` when none were emitted.

use std::fmt;

use crate::model::{EnclaveId, Signal};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub step: u64,
    pub caller: EnclaveId,
    pub instruction: &'static str,
    pub arguments: String,
    pub result: String,
    pub signals: Vec<(EnclaveId, Signal)>,
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{}\t{}\t{}\t{}\t",
            self.step, self.caller, self.instruction, self.arguments, self.result
        )?;
        if self.signals.is_empty() {
            write!(f, "-")
        } else {
            let mut first = true;
            for (target, sig) in &self.signals {
                if !first {
                    write!(f, ";")?;
                }
                write!(f, "{target}:{sig}")?;
                first = false;
            }
            Ok(())
        }
    }
}

/// Renders a full trace, one record per line.
pub fn render(records: &[TraceRecord]) -> String {
    let mut out = String::new();
    for rec in records {
        out.push_str(&rec.to_string());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{SignalKind, Uid, OS_ID};

    #[test]
    fn line_format_is_stable() {
        let rec = TraceRecord {
            step: 3,
            caller: EnclaveId(1),
            instruction: "share",
            arguments: "r=1,o=E2,max=r---".into(),
            result: "SUCCESS".into(),
            signals: vec![(
                OS_ID,
                Signal {
                    kind: SignalKind::LockReleased,
                    region: Uid(1),
                    actor: EnclaveId(2),
                },
            )],
        };
        assert_eq!(
            rec.to_string(),
            "3\tE1\tshare\tr=1,o=E2,max=r---\tSUCCESS\tOS:LockReleased(r=1,actor=E2)"
        );
    }
}
