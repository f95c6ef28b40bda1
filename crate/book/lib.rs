// The guide's code blocks run as doc-tests: each chapter is attached to a
// module here so `cargo test` compiles and runs every `rust` fence. Run
// `mdbook build book` to render the HTML.

#[doc = include_str!("src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("src/sphere.md")]
pub mod sphere {}
#[doc = include_str!("src/cubemap.md")]
pub mod cubemap {}
#[doc = include_str!("src/padding.md")]
pub mod padding {}
#[doc = include_str!("src/warping.md")]
pub mod warping {}
#[doc = include_str!("src/losses.md")]
pub mod losses {}
#[doc = include_str!("src/synthetic.md")]
pub mod synthetic {}
#[doc = include_str!("src/pose.md")]
pub mod pose {}
#[doc = include_str!("src/metrics.md")]
pub mod metrics {}
#[doc = include_str!("src/cli.md")]
pub mod cli {}
#[doc = include_str!("src/benchmark.md")]
pub mod benchmark {}
