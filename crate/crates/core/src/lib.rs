pub mod embedding;
pub mod error;
pub mod evolution;
pub mod exploration;
pub mod harness;
pub mod memory;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod prompts;
pub mod provider;
pub mod tools;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/getting-started.md")]
    mod getting_started {}
    #[doc = include_str!("../../../book/src/episode-loop.md")]
    mod episode_loop {}
    #[doc = include_str!("../../../book/src/tools-and-fixtures.md")]
    mod tools_and_fixtures {}
    #[doc = include_str!("../../../book/src/memory-bank.md")]
    mod memory_bank {}
    #[doc = include_str!("../../../book/src/selection-and-evolution.md")]
    mod selection_and_evolution {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/configuration.md")]
    mod configuration {}
}
