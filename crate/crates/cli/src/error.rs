use serde::Serialize;

/// Failure classes with distinct exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or missing input file; exit 2.
    Config { field: String, message: String },
    /// Numerical failure inside a module; exit 3.
    Numerical { module: &'static str, source: stbayes::Error },
    /// Anything else (I/O, malformed data); exit 1.
    Run { module: &'static str, source: stbayes::Error },
}

#[derive(Serialize)]
struct Report<'a> {
    kind: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    field: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    module: Option<&'a str>,
    message: String,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Numerical { .. } => 3,
            CliError::Run { .. } => 1,
        }
    }

    /// One-line JSON for stderr.
    pub fn to_json(&self) -> String {
        let r = match self {
            CliError::Config { field, message } => Report {
                kind: "config",
                field: Some(field),
                module: None,
                message: message.clone(),
            },
            CliError::Numerical { module, source } => Report {
                kind: "numerical",
                field: None,
                module: Some(module),
                message: source.to_string(),
            },
            CliError::Run { module, source } => Report {
                kind: "error",
                field: None,
                module: Some(module),
                message: source.to_string(),
            },
        };
        serde_json::to_string(&r).unwrap_or_else(|_| format!("{{\"kind\":\"{}\"}}", r.kind))
    }
}

/// Attaches the module name to a library error and picks its class.
pub trait Context<T> {
    fn ctx(self, module: &'static str) -> Result<T, CliError>;
}

impl<T, E: Into<stbayes::Error>> Context<T> for Result<T, E> {
    fn ctx(self, module: &'static str) -> Result<T, CliError> {
        self.map_err(|e| {
            let source = e.into();
            if source.is_numerical() {
                CliError::Numerical { module, source }
            } else {
                CliError::Run { module, source }
            }
        })
    }
}
