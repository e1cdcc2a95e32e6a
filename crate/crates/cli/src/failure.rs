use std::fmt;

/// Command failure, classified by exit code.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Data(String),
    Numerical(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Data(_) => 3,
            Failure::Numerical(_) => 4,
        }
    }

    /// Wraps a library error raised by `module`. Input-shaped errors fall in
    /// `fallback`; numerical ones always map to code 4.
    pub fn from_core(module: &str, e: specsmc::Error, fallback: fn(String) -> Failure) -> Self {
        let msg = format!("{module}: {e}");
        if e.is_numerical() {
            return Failure::Numerical(msg);
        }
        match e {
            specsmc::Error::Io(_) | specsmc::Error::Parse { .. } | specsmc::Error::Data(_) => {
                Failure::Data(msg)
            }
            _ => fallback(msg),
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Data(m) | Failure::Numerical(m) => m,
        }
    }

    /// Appends the configuration echo to the message.
    pub fn with_config(self, echo: &str) -> Self {
        let add = |m: String| format!("{m}\n--- configuration ---\n{echo}");
        match self {
            Failure::Config(m) => Failure::Config(add(m)),
            Failure::Data(m) => Failure::Data(add(m)),
            Failure::Numerical(m) => Failure::Numerical(add(m)),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self {
            Failure::Config(_) => "configuration error",
            Failure::Data(_) => "data error",
            Failure::Numerical(_) => "numerical error",
        };
        write!(f, "{kind}: {}", self.message())
    }
}

impl std::error::Error for Failure {}

pub fn io_failure(path: &std::path::Path, e: std::io::Error) -> Failure {
    Failure::Data(format!("{}: {e}", path.display()))
}
