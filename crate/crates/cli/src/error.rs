//! Command failures and their exit codes.

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, unreadable config or missing input (exit 2).
    Usage(String),
    /// Invalid data or runtime failure (exit 3).
    Validation(String),
    /// An acceptance gate did not pass (exit 4).
    Gate(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Gate(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Validation(_) => "validation",
            CliError::Gate(_) => "gate",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Validation(m) | CliError::Gate(m) => m,
        }
    }

    /// `error kind=<kind> code=<n>: <message>` on a single line.
    pub fn line(&self) -> String {
        let msg: Vec<&str> = self.message().split_whitespace().collect();
        format!("error kind={} code={}: {}", self.kind(), self.code(), msg.join(" "))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.line())
    }
}

impl From<graphclip::Error> for CliError {
    fn from(e: graphclip::Error) -> Self {
        match &e {
            graphclip::Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Validation(e.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_line_messages() {
        let e = CliError::Validation("a\nb  c".into());
        assert_eq!(e.line(), "error kind=validation code=3: a b c");
        assert_eq!(CliError::Gate(String::new()).code(), 4);
    }
}
