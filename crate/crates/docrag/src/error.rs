use thiserror::Error;

#[derive(Debug, Error)]
pub enum DocragError {
    #[error("no documentation chunks were produced")]
    EmptyCorpus,
    #[error("{0}")]
    Precondition(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("corrupt index: {0}")]
    Format(String),
}

impl DocragError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        DocragError::Io { path: path.display().to_string(), source }
    }
}
