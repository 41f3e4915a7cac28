use thiserror::Error;

use toolseq::checkpoint::CheckpointError;
use toolseq::degrade::DegradeError;
use toolseq::oracle::OracleError;
use toolseq::po::PoError;
use toolseq::raster::RasterError;
use toolseq::reward::RewardError;

/// Command failure carrying its process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Checkpoint(String),
    #[error("{0}")]
    Budget(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    /// 2 input error, 3 checkpoint mismatch, 4 budget, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Checkpoint(_) => 3,
            CliError::Budget(_) => 4,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        match e {
            CheckpointError::Io { .. } | CheckpointError::Parse { .. } => CliError::Input(e.to_string()),
            _ => CliError::Checkpoint(e.to_string()),
        }
    }
}

impl From<DegradeError> for CliError {
    fn from(e: DegradeError) -> Self {
        match e {
            DegradeError::Unwritable { .. } => CliError::Runtime(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::Budget { .. } => CliError::Budget(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<PoError> for CliError {
    fn from(e: PoError) -> Self {
        match e {
            PoError::Config(_) | PoError::NoData => CliError::Input(e.to_string()),
            PoError::Reward(RewardError::MissingClean) => CliError::Input(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<RewardError> for CliError {
    fn from(e: RewardError) -> Self {
        match e {
            RewardError::MissingClean => CliError::Input(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<RasterError> for CliError {
    fn from(e: RasterError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}
