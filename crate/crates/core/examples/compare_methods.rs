//! Runs VCA, single-layer L1/2-NMF and the multilayer cascade on default
//! synthetic scenes and prints rmsSAD / rmsAAD per method.
//!
//! cargo run --release -p unmix-core --example compare_methods -- 30 3

use std::time::Instant;

use unmix_core::fcls::{fcls_image, FclsConfig};
use unmix_core::metrics::evaluate;
use unmix_core::mlnmf::{unmix, MlnmfConfig};
use unmix_core::synthgen::{generate_scene, SceneSpec, SpectralLibrary};
use unmix_core::vca::vca;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let snr: f64 = args.get(1).map_or(30.0, |s| s.parse().unwrap());
    let seeds: u64 = args.get(2).map_or(3, |s| s.parse().unwrap());
    let lib = SpectralLibrary::fixture();
    let cfg = MlnmfConfig::default();
    for seed in 0..seeds {
        let spec = SceneSpec { snr_db: snr, seed, ..SceneSpec::default() };
        let scene = generate_scene(&lib, &spec).unwrap();
        let x = &scene.observations;
        let p = spec.endmember_count();
        let truth = (scene.endmembers.data(), scene.abundances.data());

        let t = Instant::now();
        let v = vca(x, p, seed).unwrap();
        let s = fcls_image(&v.endmembers, x, &FclsConfig::default()).unwrap();
        let r = evaluate(truth.0, v.endmembers.data(), Some((truth.1, s.data()))).unwrap();
        println!("seed {seed} vca    sad {:.4} aad {:.4} {:.2}s", r.rms_sad, r.rms_aad.unwrap(), t.elapsed().as_secs_f64());

        let t = Instant::now();
        let res = unmix(x, p, &cfg.single_layer(x)).unwrap();
        let r = evaluate(truth.0, res.endmembers.data(), Some((truth.1, res.abundances.data()))).unwrap();
        println!("seed {seed} l12nmf sad {:.4} aad {:.4} {:.2}s iters {:?}", r.rms_sad, r.rms_aad.unwrap(), t.elapsed().as_secs_f64(),
            res.traces.iter().map(|t| t.values.len() - 1).collect::<Vec<_>>());

        let t = Instant::now();
        let res = unmix(x, p, &cfg).unwrap();
        let r = evaluate(truth.0, res.endmembers.data(), Some((truth.1, res.abundances.data()))).unwrap();
        println!("seed {seed} mlnmf  sad {:.4} aad {:.4} {:.2}s iters {:?} w {:?}", r.rms_sad, r.rms_aad.unwrap(), t.elapsed().as_secs_f64(),
            res.traces.iter().map(|t| t.values.len() - 1).collect::<Vec<_>>(), res.weights);
    }
}
