pub mod actantial;
pub mod amr;
pub mod corpus;
pub mod export;
pub mod labeling;
pub mod opinion;
pub mod pipeline;
pub mod synth;
