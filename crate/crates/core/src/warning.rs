use std::io::Write;

use serde::Serialize;

use crate::probes::Family;

/// Non-fatal event, emitted as one JSON object per line.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Warning {
    EmptyCategory {
        family: Family,
        category: String,
    },
    UndefinedChange {
        word: String,
        month: u32,
    },
    ZeroFrequency {
        dropped: usize,
    },
    SkippedAnalysis {
        analysis: String,
        family: Family,
        reason: String,
    },
}

impl Warning {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("warnings serialize")
    }
}

pub fn write_json_lines<W: Write>(out: &mut W, warnings: &[Warning]) -> std::io::Result<()> {
    for w in warnings {
        writeln!(out, "{}", w.to_json_line())?;
    }
    Ok(())
}
