//! The JSON report every subcommand emits, and its schema check.

use std::sync::OnceLock;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{CliError, EXIT_IDENTIFICATION, EXIT_INTERNAL, EXIT_OK, EXIT_VALIDATION};

pub const SCHEMA_VERSION: &str = "1.0";
pub const REPORT_SCHEMA: &str = include_str!("../schema/report.schema.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Ok,
    ValidationError,
    IdentificationFailure,
    InternalError,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => EXIT_OK,
            Status::ValidationError => EXIT_VALIDATION,
            Status::IdentificationFailure => EXIT_IDENTIFICATION,
            Status::InternalError => EXIT_INTERNAL,
        }
    }

    fn from_exit_code(code: i32) -> Status {
        match code {
            EXIT_OK => Status::Ok,
            EXIT_IDENTIFICATION => Status::IdentificationFailure,
            EXIT_VALIDATION => Status::ValidationError,
            _ => Status::InternalError,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Tool {
    pub name: &'static str,
    pub version: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorInfo {
    pub kind: &'static str,
    pub message: String,
}

/// Machine-readable outcome of one run. Verdicts and estimates are JSON
/// objects tagged by a `type` field.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema_version: &'static str,
    pub tool: Tool,
    pub command: &'static str,
    pub status: Status,
    pub inputs: Value,
    pub verdicts: Vec<Value>,
    pub estimates: Vec<Value>,
    pub warnings: Vec<String>,
    pub error: Option<ErrorInfo>,
    /// Human-readable lines for standard output; not part of the JSON.
    #[serde(skip)]
    pub summary: Vec<String>,
}

impl Report {
    pub fn new(command: &'static str, inputs: Value) -> Report {
        Report {
            schema_version: SCHEMA_VERSION,
            tool: Tool {
                name: "transport",
                version: env!("CARGO_PKG_VERSION"),
            },
            command,
            status: Status::Ok,
            inputs,
            verdicts: Vec::new(),
            estimates: Vec::new(),
            warnings: Vec::new(),
            error: None,
            summary: Vec::new(),
        }
    }

    pub fn verdict(&mut self, kind: &str, body: &impl Serialize) {
        self.verdicts.push(tagged(kind, body));
    }

    pub fn estimate(&mut self, kind: &str, body: &impl Serialize) {
        self.estimates.push(tagged(kind, body));
    }

    pub fn fail(&mut self, error: &CliError) {
        self.status = Status::from_exit_code(error.exit_code());
        self.error = Some(ErrorInfo {
            kind: error.kind(),
            message: error.to_string(),
        });
        self.summary.push(format!("error: {error}"));
    }

    pub fn exit_code(&self) -> i32 {
        self.status.exit_code()
    }

    /// Pretty JSON, after checking it against the shipped schema.
    pub fn to_json(&self) -> Result<String, CliError> {
        let value = serde_json::to_value(self).map_err(|e| CliError::Schema(e.to_string()))?;
        validate_report(&value)?;
        let mut text =
            serde_json::to_string_pretty(&value).map_err(|e| CliError::Schema(e.to_string()))?;
        text.push('\n');
        Ok(text)
    }
}

/// `body` serialized as an object with `"type": kind` first.
fn tagged(kind: &str, body: &impl Serialize) -> Value {
    let mut out = Map::new();
    out.insert("type".into(), Value::String(kind.into()));
    match serde_json::to_value(body) {
        Ok(Value::Object(fields)) => out.extend(fields),
        Ok(other) => {
            out.insert("value".into(), other);
        }
        Err(e) => {
            out.insert(
                "value".into(),
                Value::String(format!("unserializable: {e}")),
            );
        }
    }
    Value::Object(out)
}

fn validator() -> &'static jsonschema::Validator {
    static VALIDATOR: OnceLock<jsonschema::Validator> = OnceLock::new();
    VALIDATOR.get_or_init(|| {
        let schema: Value =
            serde_json::from_str(REPORT_SCHEMA).expect("shipped schema is valid JSON");
        jsonschema::validator_for(&schema).expect("shipped schema compiles")
    })
}

/// Every schema violation of `report`, joined into one message.
pub fn validate_report(report: &Value) -> Result<(), CliError> {
    let errors: Vec<String> = validator()
        .iter_errors(report)
        .map(|e| format!("{} at {}", e, e.instance_path()))
        .collect();
    if errors.is_empty() {
        Ok(())
    } else {
        Err(CliError::Schema(errors.join("; ")))
    }
}
