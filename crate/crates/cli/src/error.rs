use thiserror::Error;
use volterra_core::ErrorKind;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: volterra_core::Error,
    },
}

impl CliError {
    /// 2 config/input, 3 numerical or existence failure, 4 IO.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 4,
            CliError::Core { source, .. } => match source.kind() {
                ErrorKind::Input => 2,
                ErrorKind::Numerical => 3,
                ErrorKind::Io => 4,
            },
        }
    }
}

/// Attaches a module context to core errors.
pub trait Context<T> {
    fn ctx(self, context: &str) -> Result<T, CliError>;
}

impl<T> Context<T> for volterra_core::Result<T> {
    fn ctx(self, context: &str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Core {
            context: context.to_string(),
            source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use volterra_core::Error;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(CliError::Io("x".into()).exit_code(), 4);
        let num: volterra_core::Result<()> = Err(Error::ExistenceLoss { t: 0.3 });
        assert_eq!(num.ctx("solve").unwrap_err().exit_code(), 3);
        let par: volterra_core::Result<()> = Err(Error::Parameter("bad".into()));
        let e = par.ctx("optimize").unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().starts_with("optimize: "));
    }
}
