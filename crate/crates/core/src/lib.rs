pub mod corpus;
pub mod degrade;
pub mod featurize;
pub mod raster;
pub mod toolset;
pub mod reward;
pub mod env;
pub mod nets;
pub mod po;
pub mod oracle;
pub mod checkpoint;
