//! Shared fixtures for the benchmarks.

use nalgebra::DVector;
use num_complex::Complex64;
use relaybf_core::{
    effective_gains, generate_channels, principal_eigvec, vertex_set, ChannelRealization, NetworkConfig, SnrContext,
    VertexSet,
};

/// One channel draw with the beamformer along the principal eigenvector of
/// the summed relay Gram matrices.
pub struct Fixture {
    pub config: NetworkConfig,
    pub ch: ChannelRealization,
    pub g: DVector<Complex64>,
    pub ctx: SnrContext,
    pub vertices: VertexSet,
}

impl Fixture {
    pub fn new(n_t: usize, relay_antennas: usize, n_relays: usize, rho: f64, relay_power_db: f64, seed: u64) -> Self {
        let config =
            NetworkConfig::from_db(n_t, vec![relay_antennas; n_relays], 10.0, relay_power_db, rho).expect("valid config");
        let ch = generate_channels(&config, seed);
        let grams = ch.grams();
        let mut sum = grams[0].clone();
        for k in &grams[1..] {
            sum += k;
        }
        let g = principal_eigvec(&sum).expect("eigenvector").0.scale(config.p_s.sqrt());
        let ctx = SnrContext::new(effective_gains(&ch, &g).expect("gains").u_norms, &config);
        let vertices = vertex_set(&ch).expect("vertices");
        Fixture { config, ch, g, ctx, vertices }
    }
}
