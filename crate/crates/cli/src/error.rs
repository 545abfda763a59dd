use std::fmt;
use std::path::Path;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config(String),
    Io(String),
    Format(String),
    Core(gravtop_core::Error),
    /// A validation check that ran but did not pass.
    Check(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    pub fn kind(&self) -> &'static str {
        use gravtop_core::Error as E;
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Io(_) => "io",
            CliError::Format(_) => "format",
            CliError::Check(_) => "check",
            CliError::Core(e) => {
                let mut e = e;
                while let E::AtIteration { source, .. } = e {
                    e = source;
                }
                match e {
                    E::Config(_) => "config",
                    E::Parameter(_) => "parameter",
                    E::Analysis(_) => "analysis",
                    E::Optimizer(_) => "optimizer",
                    E::AtIteration { .. } => unreachable!(),
                }
            }
        }
    }

    pub fn iteration(&self) -> Option<usize> {
        match self {
            CliError::Core(gravtop_core::Error::AtIteration { iteration, .. }) => Some(*iteration),
            _ => None,
        }
    }

    /// Single tab-separated line: `error kind=... iteration=... message=...`.
    pub fn machine_line(&self) -> String {
        let it = self.iteration().map_or_else(|| "-".to_string(), |k| k.to_string());
        let msg = self.to_string().replace(['\n', '\t'], " ");
        format!("error\tkind={}\titeration={it}\tmessage={msg}", self.kind())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Config(m) | CliError::Io(m) | CliError::Format(m) | CliError::Check(m) => {
                f.write_str(m)
            }
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<gravtop_core::Error> for CliError {
    fn from(e: gravtop_core::Error) -> Self {
        CliError::Core(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn machine_line_unwraps_iteration() {
        let e = CliError::Core(gravtop_core::Error::AtIteration {
            iteration: 12,
            source: Box::new(gravtop_core::Error::Analysis("singular\nmatrix".into())),
        });
        assert_eq!(e.kind(), "analysis");
        assert_eq!(
            e.machine_line(),
            "error\tkind=analysis\titeration=12\tmessage=iteration 12: analysis error: singular matrix"
        );
        assert_eq!(CliError::Usage("x".into()).exit_code(), 2);
    }
}
