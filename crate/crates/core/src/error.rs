use mhb_comm::CommError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error(transparent)]
    Comm(#[from] CommError),

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("global point ({0}, {1}, {2}) is outside the global grid")]
    OutOfBounds(u64, u64, u64),

    #[error("cannot coarsen local grid {nx}x{ny}x{nz}: every dimension must be even")]
    OddDimension { nx: usize, ny: usize, nz: usize },

    #[error("column {global} has no valid owner (generation bug)")]
    UnownedColumn { global: u64 },

    #[error("rank {peer} requested global row {global}, which rank {rank} does not own")]
    MisroutedRequest { rank: usize, peer: usize, global: u64 },

    #[error("halo metadata already consumed; the matrix is in local numbering")]
    HaloAlreadySetUp,

    #[error("zero diagonal in row {row}")]
    ZeroDiagonal { row: usize },

    #[error("matrix not SPD: <p, Ap> = {0} at iteration {1}")]
    NotSpd(f64, usize),

    #[error("residual became NaN at iteration {0}")]
    NanResidual(usize),
}

pub type Result<T, E = CoreError> = std::result::Result<T, E>;
