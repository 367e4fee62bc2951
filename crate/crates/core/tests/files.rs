use topomap_core::synth::{generate, write_synth, SynthParams};
use topomap_core::{
    compute_layout, compute_nap, evaluate_layout, load_activation_set, render_grid, GridSpec, GroupSpec, Layout,
    LayoutConfig, Method, NapMatrix, RenderOptions,
};

#[test]
fn synthetic_dump_survives_every_file_boundary() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(&SynthParams { n_neurons: 24, examples_per_group: 8, seed: 9, ..SynthParams::default() }).unwrap();
    let manifest = write_synth(&data, dir.path()).unwrap();
    let acts = load_activation_set(&manifest).unwrap().with_seed(9);

    let spec = GroupSpec::from_labels(&acts.labels).unwrap().with_samples_per_group(5);
    let spec_path = dir.path().join("groups.json");
    spec.write(&spec_path).unwrap();
    let spec = GroupSpec::read(&spec_path).unwrap();

    let nap = compute_nap(&acts, &spec).unwrap();
    let nap_path = nap.save(dir.path(), "nap").unwrap();
    let nap_back = NapMatrix::load(&nap_path).unwrap();
    assert_eq!(nap_back, nap);

    let layout = compute_layout(Method::PcaPso, &nap_back, &LayoutConfig::default(), 2).unwrap();
    let layout_path = dir.path().join("layout.json");
    layout.save(&layout_path).unwrap();
    let layout_back = Layout::load(&layout_path).unwrap();
    assert_eq!(layout_back, layout);

    let figure = render_grid(&nap_back, &layout_back, &GridSpec::strip(&nap.group_ids, true), &RenderOptions::default())
        .unwrap();
    let png = dir.path().join("maps.png");
    figure.write_png(&png).unwrap();
    assert!(std::fs::metadata(&png).unwrap().len() > 0);

    let a = evaluate_layout(&nap, &layout).unwrap();
    let b = evaluate_layout(&nap_back, &layout_back).unwrap();
    assert_eq!(a, b);
}
