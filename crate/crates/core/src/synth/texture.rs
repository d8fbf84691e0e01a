use crate::numcore::rng::SplitMix64;

/// Band-limited procedural texture: a sum of random plane waves with
/// wavelengths between 6 and 20 pixels around a mid-gray mean. Defined on the
/// whole plane, so displaced sampling needs no interpolation.
#[derive(Debug, Clone)]
pub struct Texture {
    waves: Vec<(f64, f64, f64, f64)>,
}

impl Texture {
    pub fn new(seed: u64, components: usize) -> Self {
        let mut rng = SplitMix64::new(seed);
        let waves = (0..components)
            .map(|_| {
                let wavelength = rng.uniform(6.0, 20.0);
                let theta = rng.uniform(0.0, std::f64::consts::TAU);
                let k = std::f64::consts::TAU / wavelength;
                let phase = rng.uniform(0.0, std::f64::consts::TAU);
                let amp = rng.uniform(8.0, 16.0);
                (k * theta.cos(), k * theta.sin(), phase, amp)
            })
            .collect();
        Self { waves }
    }

    pub fn eval(&self, x: f64, y: f64) -> f32 {
        let s: f64 = self
            .waves
            .iter()
            .map(|&(kx, ky, ph, a)| a * (kx * x + ky * y + ph).cos())
            .sum();
        (128.0 + s) as f32
    }
}
