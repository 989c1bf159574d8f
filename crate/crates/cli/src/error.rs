use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("scenario schema: {message}")]
    Schema {
        field: Option<String>,
        line: Option<usize>,
        column: Option<usize>,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Sim(#[from] catsim::Error),
}

impl CliError {
    pub fn schema(field: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Schema {
            field: Some(field.into()),
            line: None,
            column: None,
            message: message.into(),
        }
    }

    /// 2 schema, 3 solver divergence, 4 truncation guard, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema { .. } => 2,
            CliError::Sim(catsim::Error::Divergence { .. } | catsim::Error::StepSize { .. }) => 3,
            CliError::Sim(catsim::Error::Truncation { .. }) => 4,
            _ => 1,
        }
    }

    fn category(&self) -> &'static str {
        match self.exit_code() {
            2 => "schema",
            3 => "divergence",
            4 => "truncation",
            _ => "runtime",
        }
    }

    /// One-line JSON error report for stderr.
    pub fn report(&self) -> String {
        let mut v = json!({
            "error": self.category(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        });
        match self {
            CliError::Schema {
                field, line, column, ..
            } => {
                v["field"] = json!(field);
                v["line"] = json!(line);
                v["column"] = json!(column);
            }
            CliError::Sim(catsim::Error::Truncation { what, required, dim }) => {
                v["what"] = json!(what);
                v["required_dim"] = json!(required);
                v["dim"] = json!(dim);
            }
            _ => {}
        }
        v.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes() {
        assert_eq!(CliError::schema("x", "y").exit_code(), 2);
        assert_eq!(CliError::Sim(catsim::Error::Divergence { time: 1.0 }).exit_code(), 3);
        let t = CliError::Sim(catsim::Error::Truncation {
            what: "cat".into(),
            required: 46,
            dim: 20,
        });
        assert_eq!(t.exit_code(), 4);
        let r: serde_json::Value = serde_json::from_str(&t.report()).unwrap();
        assert_eq!(r["required_dim"], 46);
        assert_eq!(CliError::Sim(catsim::Error::EmptyRecord("n".into())).exit_code(), 1);
    }
}
