//! Times forward passes of the built-in filter banks.

use std::time::Instant;

use percept_core::engine::{default_taps, forward};
use percept_core::filterbank::{build_gabor_bank, build_pyramid_bank, GaborParams, PyramidParams};
use percept_core::ImagePlane;

fn main() -> percept_core::Result<()> {
    let size: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(112);
    let img = ImagePlane::from_data(
        size,
        size,
        1,
        (0..size * size).map(|i| ((i * 7919) % 256) as f64).collect(),
    )?;
    for (name, net) in [
        ("gabor", build_gabor_bank(&GaborParams::default(), size, size)?),
        ("pyramid", build_pyramid_bank(&PyramidParams::default(), size, size)?),
    ] {
        let taps = default_taps(&net);
        let t = Instant::now();
        forward(&net, &img, &taps)?;
        let first = t.elapsed();
        let n = 20;
        let t = Instant::now();
        for _ in 0..n {
            forward(&net, &img, &taps)?;
        }
        println!("{name}: first {first:?}, then {:?} per forward", t.elapsed() / n);
    }
    Ok(())
}
