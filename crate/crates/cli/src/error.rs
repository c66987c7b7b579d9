use std::fmt;

/// Exit status classes: 1 usage or config, 2 data, 3 backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Config,
    Data,
    Backend,
}

impl Kind {
    pub fn exit_code(self) -> i32 {
        match self {
            Kind::Config => 1,
            Kind::Data => 2,
            Kind::Backend => 3,
        }
    }
}

#[derive(Debug)]
pub struct Failure {
    pub kind: Kind,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn new(kind: Kind, error: impl Into<anyhow::Error>) -> Self {
        Self {
            kind,
            error: error.into(),
        }
    }

    pub fn config(msg: impl fmt::Display) -> Self {
        Self::new(Kind::Config, anyhow::anyhow!("{msg}"))
    }

    pub fn data(msg: impl fmt::Display) -> Self {
        Self::new(Kind::Data, anyhow::anyhow!("{msg}"))
    }

    pub fn backend(msg: impl fmt::Display) -> Self {
        Self::new(Kind::Backend, anyhow::anyhow!("{msg}"))
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

pub type Outcome<T> = Result<T, Failure>;

/// Tags any error with an exit class.
pub trait Classify<T> {
    fn or_config(self) -> Outcome<T>;
    fn or_data(self) -> Outcome<T>;
}

impl<T, E> Classify<T> for Result<T, E>
where
    E: Into<anyhow::Error>,
{
    fn or_config(self) -> Outcome<T> {
        self.map_err(|e| Failure::new(Kind::Config, e))
    }

    fn or_data(self) -> Outcome<T> {
        self.map_err(|e| Failure::new(Kind::Data, e))
    }
}
