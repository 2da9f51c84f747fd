use std::fmt;

use thermo_mdp::ErrorKind;

/// Everything that can stop a command, with its exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Scenario(String),
    Library(thermo_mdp::Error),
    Io(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) | CliError::Scenario(_) => "validation",
            CliError::Library(e) => match e.kind() {
                ErrorKind::Validation => "validation",
                ErrorKind::Numerical => "numerical",
                ErrorKind::CapExceeded => "cap_exceeded",
            },
            CliError::Io(_) => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "validation" => 2,
            "numerical" => 3,
            "cap_exceeded" => 4,
            _ => 1,
        }
    }

    /// One-line JSON for the diagnostic stream.
    pub fn to_json(&self) -> String {
        let mut body = serde_json::json!({
            "kind": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        });
        if let CliError::Library(e) = self {
            body["variant"] = format!("{e:?}")
                .split([' ', '(', '{'])
                .next()
                .unwrap_or_default()
                .into();
        }
        serde_json::json!({ "error": body }).to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Scenario(m) | CliError::Io(m) => f.write_str(m),
            CliError::Library(e) => write!(f, "{e}"),
        }
    }
}

impl From<thermo_mdp::Error> for CliError {
    fn from(e: thermo_mdp::Error) -> Self {
        CliError::Library(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
