use thiserror::Error;

/// Errors produced by the tensor engine and the pipeline layers built on it.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch at layer `{layer}`: expected {expected}, got {got}")]
    ShapeMismatch {
        layer: String,
        expected: String,
        got: String,
    },

    #[error("tensor shape {shape:?} does not match data length {len}")]
    BadTensorShape { shape: Vec<usize>, len: usize },

    #[error("duplicate layer name `{0}`")]
    DuplicateLayerName(String),

    #[error("model must end in a dense layer matching its class count")]
    MissingClassHead,

    #[error("unknown layer `{0}`")]
    UnknownLayer(String),

    #[error("unknown block id {0}")]
    UnknownBlock(usize),

    #[error("freeze policy must leave the class head `{0}` trainable")]
    FrozenClassHead(String),

    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },

    #[error("invalid probability vector: {0}")]
    InvalidProbability(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("need at least 2 target classes, got {0}")]
    TooFewClasses(usize),

    #[error("stream of {frames} frames is shorter than window length {window}")]
    StreamShorterThanWindow { frames: usize, window: usize },

    #[error("invalid window config: stride {stride} exceeds window length {window}")]
    StrideExceedsWindow { stride: usize, window: usize },

    #[error("window config values must be positive")]
    ZeroWindowParam,

    #[error("frame {0} covered by zero windows")]
    UncoveredFrame(usize),

    #[error("invalid generator spec: {0}")]
    InvalidGeneratorSpec(String),

    #[error("invalid class index {index} for {num_classes} classes")]
    InvalidClassIndex { index: usize, num_classes: usize },

    #[error("split would leave class `{0}` empty in one part; generate a larger stream")]
    SplitClassEmpty(String),

    #[error("stream holds fewer than 2 distinct classes; nothing to classify")]
    DegenerateStream,

    #[error("invalid split fraction {0}; must be strictly between 0 and 1")]
    BadSplitFraction(f64),

    #[error("scenario invalid: {0}")]
    InvalidScenario(String),

    #[error("evaluation inputs differ in length: {scores} scores vs {labels} labels")]
    EvalLengthMismatch { scores: usize, labels: usize },

    #[error("model emits {model} classes but {labels} class names were given")]
    ClassCountMismatch { model: usize, labels: usize },

    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),

    #[error(transparent)]
    StreamFile(#[from] StreamFileError),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Checkpoint file failures. Each corruption mode is its own variant so
/// callers can tell a wrong file from a damaged one.
#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad magic: not a model checkpoint file")]
    BadMagic,

    #[error("unsupported checkpoint format version {found} (supported: {supported})")]
    VersionMismatch { found: u32, supported: u32 },

    #[error("checkpoint truncated while reading {reading}")]
    Truncated { reading: String },

    #[error("weight blob for `{name}` holds {got} elements, layer expects {expected}")]
    BlobShapeMismatch {
        name: String,
        expected: usize,
        got: usize,
    },

    #[error("trailing bytes after final weight blob")]
    TrailingBytes,

    #[error("checkpoint metadata is not valid JSON: {0}")]
    Metadata(#[from] serde_json::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Stream dataset file failures.
#[derive(Debug, Error)]
pub enum StreamFileError {
    #[error("bad magic: not a labeled stream file")]
    BadMagic,

    #[error("unsupported stream format version {found} (supported: {supported})")]
    VersionMismatch { found: u32, supported: u32 },

    #[error("stream file truncated while reading {reading}")]
    Truncated { reading: String },

    #[error("trailing bytes after final frame")]
    TrailingBytes,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
