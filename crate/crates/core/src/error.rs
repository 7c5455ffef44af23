use std::io;
use std::path::PathBuf;

use crate::corpus::{ArticleId, CategoryId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot access {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{}: {bad} of {total} lines are malformed (more than 1%); first problem: {first}", path.display())]
    TooManyMalformed {
        path: PathBuf,
        bad: usize,
        total: usize,
        first: String,
    },

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate article id {0}")]
    DuplicateArticle(ArticleId),

    #[error("section title {0:?} is empty after whitespace normalization")]
    InvalidTitle(String),

    #[error("split ratios {0:?} do not sum to 1")]
    InvalidRatios([f64; 3]),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown category id {0}")]
    UnknownCategory(CategoryId),

    #[error("unknown row {0}")]
    UnknownRow(String),

    #[error("purity is undefined for an all-zero type histogram")]
    UndefinedPurity,

    #[error("pruning threshold {0} is outside [0, 1]")]
    ThresholdOutOfRange(f64),

    #[error("annotation set is empty")]
    EmptyAnnotations,

    #[error("rank {k} exceeds min(rows, cols) = min({rows}, {cols})")]
    RankTooLarge { k: usize, rows: usize, cols: usize },

    #[error("training loss became non-finite at iteration {iteration}; regularization too small or degenerate input")]
    NonFiniteLoss { iteration: usize },

    #[error("matrix is in {found} mode, expected {expected}")]
    WrongMatrixMode {
        expected: &'static str,
        found: &'static str,
    },

    #[error("training documents contain no vocabulary")]
    EmptyVocabulary,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("validation set has {got} articles, at least {need} are required")]
    ValidationTooSmall { got: usize, need: usize },

    #[error("no evaluable articles (all {skipped} had an empty truth set)")]
    NoEvaluableArticles { skipped: usize },

    #[error("article {article} has {count} recommendations, at most {max} can be exported")]
    TooManyRecommendations {
        article: ArticleId,
        count: usize,
        max: usize,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
