//! Fixtures shared by the benchmarks.

use rstgcn::model::{GraphContext, ModelConfig, ModelParams};
use rstgcn::synth::{generate_cube, SynthConfig};
use rstgcn::windows::{collect_samples, split_dataset};
use rstgcn::Sample;

pub struct Fixture {
    pub config: ModelConfig,
    pub context: GraphContext,
    pub params: ModelParams,
    pub samples: Vec<Sample>,
}

/// Default synthetic network with `channels` kernels and the first
/// `samples` training windows.
pub fn fixture(channels: usize, samples: usize) -> Fixture {
    let synth = generate_cube(&SynthConfig::default()).expect("default synth config is valid");
    let config = ModelConfig { channels, ..Default::default() };
    let splits = split_dataset(synth.cube.num_slots(), &config.window).expect("enough slots");
    let anchors: Vec<usize> = splits.train.into_iter().take(samples).collect();
    Fixture {
        context: GraphContext::new(&synth.graph, &config).expect("graph has edges"),
        params: ModelParams::init(&config, synth.graph.num_stations(), 0),
        samples: collect_samples(&synth.cube, &anchors, &config.window).expect("valid anchors"),
        config,
    }
}
