use thiserror::Error;

/// Errors produced anywhere in the shape-analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("degenerate configuration: centered norm {norm:e} is below {threshold:e}")]
    DegenerateConfiguration { norm: f64, threshold: f64 },

    #[error("singular shape: landmarks are collinear")]
    SingularShape,

    #[error("tangent vector norm {norm} is outside the injectivity radius")]
    OutOfInjectivityRadius { norm: f64 },

    #[error("antipodal points: distance {distance} is too close to pi")]
    AntipodalPoints { distance: f64 },

    #[error("frame {frame}: {source}")]
    Frame {
        frame: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("trajectory {trajectory}: {source}")]
    Trajectory {
        trajectory: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("training diverged: non-finite loss in epoch {epoch}, batch {batch}")]
    TrainingDiverged {
        epoch: usize,
        batch: usize,
        /// Per-epoch losses of the epochs completed before divergence.
        history: Vec<crate::rvae::LossBreakdown>,
    },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("unstable confidence interval: {skipped} of {total} replicates were undefined")]
    UnstableInterval { skipped: usize, total: usize },

    #[error("empty training set")]
    EmptyTrainingSet,

    #[error("fold {fold} has an empty test set")]
    EmptyTestFold { fold: usize },

    #[error("ragged data: subject {subject}, frame {frame}: {detail}")]
    RaggedData {
        subject: String,
        frame: usize,
        detail: String,
    },

    #[error("duplicate row: subject {subject}, frame {frame}, joint {joint}")]
    DuplicateRow {
        subject: String,
        frame: usize,
        joint: usize,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("missing fitted context for alignment stage {0}")]
    MissingContext(String),

    #[error("unsupported archive version {found} (expected {expected})")]
    ArchiveVersion { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at_frame(self, frame: usize) -> Self {
        Error::Frame {
            frame,
            source: Box::new(self),
        }
    }

    pub(crate) fn at_trajectory(self, trajectory: usize) -> Self {
        Error::Trajectory {
            trajectory,
            source: Box::new(self),
        }
    }

    pub(crate) fn mismatch(expected: impl ToString, found: impl ToString) -> Self {
        Error::DimensionMismatch {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
