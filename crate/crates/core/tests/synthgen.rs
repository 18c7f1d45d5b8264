use std::collections::HashSet;

use microcount::manifest::Manifest;
use microcount::seed::rng;
use microcount::synthgen::{
    compose_scene, generate_dataset, render_bacterium, sample_bacterium, BackgroundSource, Canvas, CountDistribution,
    DatasetSpec, Range, SceneConfig,
};
use proptest::prelude::*;

fn scene(count: usize, seed: u64) -> SceneConfig {
    let mut s = SceneConfig::new(64, 48, count, seed);
    s.ranges.sigma_a = Range::new(1.0, 3.0);
    s.ranges.sigma_b = Range::new(1.0, 3.0);
    s
}

#[test]
fn empty_scene_is_the_background_plate() {
    let cfg = scene(0, 4);
    let img = compose_scene(&cfg).unwrap();
    let plate = BackgroundSource::Synthetic.plate(64, 48, &mut rng(4)).unwrap();
    let expect: Vec<u8> = plate.data.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
    assert_eq!(img.pixels.as_raw(), &expect);
    assert_eq!(img.count, 0);
}

#[test]
fn labels_are_exact_and_centroids_inside() {
    for k in [1, 17, 300] {
        let img = compose_scene(&scene(k, k as u64)).unwrap();
        assert_eq!(img.count, k);
        assert_eq!(img.centroids.len(), k);
        let owners: HashSet<[i64; 2]> =
            img.centroids.iter().map(|c| [c[0].round() as i64, c[1].round() as i64]).collect();
        assert_eq!(owners.len(), k);
        assert!(img.centroids.iter().all(|c| c[0] >= 0.0 && c[0] <= 63.0 && c[1] >= 0.0 && c[1] <= 47.0));
    }
}

#[test]
fn same_seed_same_pixels() {
    let a = compose_scene(&scene(50, 9)).unwrap();
    let b = compose_scene(&scene(50, 9)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.pixels, compose_scene(&scene(50, 10)).unwrap().pixels);
}

#[test]
fn too_many_bacteria_for_the_grid() {
    assert!(compose_scene(&SceneConfig::new(4, 4, 17, 0)).is_err());
}

#[test]
fn dataset_generation_is_reproducible_and_index_local() {
    let spec = DatasetSpec { n_images: 10, scene: scene(0, 7), counts: CountDistribution::Uniform { min: 0, max: 40 } };
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let m1 = generate_dataset(&spec, d1.path()).unwrap();
    let m2 = generate_dataset(&spec, d2.path()).unwrap();
    assert_eq!(m1.records, m2.records);
    for r in &m1.records {
        assert_eq!(std::fs::read(m1.image_path(r)).unwrap(), std::fs::read(m2.image_path(r)).unwrap());
    }
    assert_eq!(Manifest::load(d1.path()).unwrap().records, m1.records);

    // Image i does not depend on how many images are generated.
    let longer = DatasetSpec { n_images: 13, ..spec.clone() };
    let d3 = tempfile::tempdir().unwrap();
    let m3 = generate_dataset(&longer, d3.path()).unwrap();
    assert_eq!(&m3.records[..10], &m1.records[..]);
}

#[test]
fn unwritable_output_reports_partial_progress() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, b"x").unwrap();
    let spec = DatasetSpec { n_images: 2, scene: scene(0, 1), counts: CountDistribution::Fixed(1) };
    assert!(generate_dataset(&spec, &blocker).is_err());
}

#[test]
fn count_distribution_must_fit_the_scene() {
    let spec = DatasetSpec { n_images: 1, scene: SceneConfig::new(10, 10, 0, 0), counts: CountDistribution::default() };
    assert!(spec.validate().is_err());
}

proptest! {
    #[test]
    fn sampled_specs_respect_ranges(seed in any::<u64>()) {
        let cfg = SceneConfig::new(100, 70, 0, seed);
        let mut r = rng(seed);
        let s = sample_bacterium(&mut r, &cfg).unwrap();
        prop_assert!(s.sigma_major >= s.sigma_minor && s.sigma_minor >= 1.5 && s.sigma_major <= 6.0);
        prop_assert!((0.0..std::f64::consts::PI).contains(&s.rotation));
        prop_assert!(s.center[0] >= 0.0 && s.center[0] <= 99.0 && s.center[1] >= 0.0 && s.center[1] <= 69.0);
        prop_assert!((0.5..=1.0).contains(&s.peak_intensity[1]));
        prop_assert!(s.peak_intensity[0] <= 0.3 && s.peak_intensity[2] <= 0.3);
        prop_assert_eq!(sample_bacterium(&mut rng(seed), &cfg).unwrap(), s);
    }

    #[test]
    fn rendering_never_decreases_pixels(seed in any::<u64>()) {
        let cfg = SceneConfig::new(40, 30, 0, seed);
        let mut r = rng(seed);
        let mut canvas = Canvas::new(40, 30);
        render_bacterium(&mut canvas, &sample_bacterium(&mut r, &cfg).unwrap());
        let before = canvas.clone();
        render_bacterium(&mut canvas, &sample_bacterium(&mut r, &cfg).unwrap());
        prop_assert!(canvas.data.iter().zip(&before.data).all(|(a, b)| a >= b));
    }
}
