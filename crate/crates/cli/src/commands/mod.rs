pub mod attention;
pub mod bench;
pub mod features;
pub mod fit;
pub mod generate;
pub mod integrate;
pub mod mesh;
