//! Network behaviour checked against a loop-based reference implementation
//! and hand-computed instances.

use chrono::NaiveDate;
use mign_core::data::Variable;
use mign_core::model::{Activation, DecoderLocation, Linear, Mlp};
use mign_core::sh::real_sh;
use mign_core::synthetic::random_stations;
use mign_core::{make_geo, GeoCoord, MeshContext, MignModel, ModelConfig, StationSnapshot};
use ndarray::Array2;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn day() -> NaiveDate {
    NaiveDate::from_ymd_opt(2024, 3, 1).unwrap()
}

fn snap(coords: &[GeoCoord], values: &[f64]) -> StationSnapshot {
    StationSnapshot::from_coords(day(), Variable::Max, coords.to_vec(), values.to_vec()).unwrap()
}

fn small_config() -> ModelConfig {
    ModelConfig {
        hidden: 4,
        layers: 1,
        mesh_level: 0,
        k_station_mesh: 3,
        k_mesh_mesh: 11,
        sh_degree: 1,
        ..ModelConfig::default()
    }
}

fn randomize(model: &mut MignModel, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in model.params_mut().tensors_mut() {
        for v in t.data_mut() {
            *v = rng.random_range(-0.8..0.8);
        }
    }
}

fn set(model: &mut MignModel, lin: Linear, w: &[f64], b: &[f64]) {
    model
        .params_mut()
        .tensor_mut(lin.weight)
        .data_mut()
        .copy_from_slice(w);
    model
        .params_mut()
        .tensor_mut(lin.bias)
        .data_mut()
        .copy_from_slice(b);
}

// ---------------------------------------------------------------------------
// reference implementation

fn haversine(a: GeoCoord, b: GeoCoord) -> f64 {
    let s1 = ((b.lat() - a.lat()) / 2.0).sin();
    let s2 = ((b.lon() - a.lon()) / 2.0).sin();
    2.0 * (s1 * s1 + a.lat().cos() * b.lat().cos() * s2 * s2)
        .sqrt()
        .min(1.0)
        .asin()
}

fn brute_knn(sources: &[GeoCoord], target: GeoCoord, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..sources.len()).collect();
    idx.sort_by(|&i, &j| {
        haversine(sources[i], target)
            .total_cmp(&haversine(sources[j], target))
            .then(i.cmp(&j))
    });
    idx.truncate(k.min(sources.len()));
    idx
}

fn act(model: &MignModel, z: f64) -> f64 {
    match model.config().activation {
        Activation::Silu => z / (1.0 + (-z).exp()),
        Activation::Tanh => z.tanh(),
        Activation::Identity => z,
    }
}

fn affine(model: &MignModel, lin: &Linear, x: &[f64]) -> Vec<f64> {
    let w = model.params().tensor(lin.weight).data();
    let b = model.params().tensor(lin.bias).data();
    (0..lin.fan_out)
        .map(|j| {
            b[j] + (0..lin.fan_in)
                .map(|i| x[i] * w[i * lin.fan_out + j])
                .sum::<f64>()
        })
        .collect()
}

fn mlp(model: &MignModel, m: &Mlp, x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    for (i, lin) in m.layers.iter().enumerate() {
        v = affine(model, lin, &v);
        if i + 1 < m.layers.len() {
            v = v.into_iter().map(|z| act(model, z)).collect();
        }
    }
    v
}

fn basis(c: GeoCoord, degree: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for n in 0..=degree {
        for m in -(n as i64)..=(n as i64) {
            out.push(real_sh(n, m, c).unwrap());
        }
    }
    out
}

fn weighted_basis(
    model: &MignModel,
    id: Option<mign_core::model::TensorId>,
    c: GeoCoord,
) -> Vec<f64> {
    match id {
        Some(id) => {
            let w = model.params().tensor(id).data();
            basis(c, model.config().sh_degree)
                .iter()
                .zip(w)
                .map(|(y, w)| y * w)
                .collect()
        }
        None => Vec::new(),
    }
}

fn mean_rows(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len() as f64;
    (0..rows[0].len())
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n)
        .collect()
}

fn ref_encode(
    model: &MignModel,
    mesh: &MeshContext,
    coords: &[GeoCoord],
    values: &[f64],
) -> Vec<Vec<f64>> {
    let msgs: Vec<Vec<f64>> = coords
        .iter()
        .zip(values)
        .map(|(&c, &x)| {
            let mut input = vec![x];
            input.extend(weighted_basis(model, model.sh_encoder(), c));
            mlp(model, model.encoder_mlp(), &input)
        })
        .collect();
    mesh.mesh()
        .nodes()
        .iter()
        .map(|&node| {
            let nb = brute_knn(coords, node, model.config().k_station_mesh);
            mean_rows(&nb.iter().map(|&s| msgs[s].clone()).collect::<Vec<_>>())
        })
        .collect()
}

fn ref_process(model: &MignModel, mesh: &MeshContext, h_enc: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let nodes = mesh.mesh().nodes();
    let mut h: Vec<Vec<f64>> = h_enc
        .iter()
        .zip(nodes)
        .map(|(row, &c)| {
            let mut r = row.clone();
            r.extend(weighted_basis(model, model.sh_processor(), c));
            r
        })
        .collect();
    if let Some(p) = model.processor_projection() {
        return h.iter().map(|r| affine(model, &p, r)).collect();
    }
    for (msg_mlp, upd_mlp) in model.message_mlps().iter().zip(model.update_mlps()) {
        let next = (0..nodes.len())
            .map(|t| {
                let msgs: Vec<Vec<f64>> = mesh
                    .edges()
                    .sources_of(t)
                    .iter()
                    .map(|&s| {
                        let mut input = h[s].clone();
                        input.extend(&h[t]);
                        if model.config().edge_distance {
                            input.push(haversine(nodes[s], nodes[t]));
                        }
                        mlp(model, msg_mlp, &input)
                    })
                    .collect();
                let mut input = h[t].clone();
                input.extend(mean_rows(&msgs));
                mlp(model, upd_mlp, &input)
            })
            .collect();
        h = next;
    }
    h
}

fn ref_decode(
    model: &MignModel,
    mesh: &MeshContext,
    h: &[Vec<f64>],
    targets: &[GeoCoord],
) -> Vec<f64> {
    let nodes = mesh.mesh().nodes();
    let scalars: Vec<f64> = h
        .iter()
        .zip(nodes)
        .map(|(row, &c)| {
            let mut input = row.clone();
            match model.config().decoder_location {
                DecoderLocation::Sh => input.extend(weighted_basis(model, model.sh_decoder(), c)),
                DecoderLocation::Raw => input.extend([c.lon(), c.lat()]),
                DecoderLocation::None => {}
            }
            mlp(model, model.decoder_mlp(), &input)[0]
        })
        .collect();
    targets
        .iter()
        .map(|&t| {
            let nb = brute_knn(nodes, t, model.config().k_station_mesh);
            nb.iter().map(|&i| scalars[i]).sum::<f64>() / nb.len() as f64
        })
        .collect()
}

fn ref_forward(
    model: &MignModel,
    mesh: &MeshContext,
    coords: &[GeoCoord],
    values: &[f64],
    targets: &[GeoCoord],
) -> Vec<f64> {
    let h0 = ref_encode(model, mesh, coords, values);
    let hl = ref_process(model, mesh, &h0);
    ref_decode(model, mesh, &hl, targets)
}

fn from_rows(rows: &[Vec<f64>]) -> Array2<f64> {
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), rows[0].len()), flat).unwrap()
}

fn assert_close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        assert!(
            (x - y).abs() <= tol * (1.0 + y.abs()),
            "entry {i}: {x} vs {y}"
        );
    }
}

// ---------------------------------------------------------------------------
// mlp_apply

#[test]
fn mlp_zero_weights_give_zero() {
    let model = MignModel::zeroed(small_config()).unwrap();
    let out = model
        .mlp_apply(model.encoder_mlp(), &[1.0, -2.0, 0.5, 3.0, 0.25])
        .unwrap();
    assert_eq!(out, vec![0.0; 4]);
}

#[test]
fn mlp_identity_layer_passes_input_through() {
    let cfg = ModelConfig {
        hidden: 1,
        mlp_layers: 1,
        encoder_sh: false,
        ..small_config()
    };
    let mut model = MignModel::zeroed(cfg).unwrap();
    let lin = model.encoder_mlp().layers[0];
    set(&mut model, lin, &[1.0], &[0.0]);
    assert_eq!(
        model.mlp_apply(model.encoder_mlp(), &[3.5]).unwrap(),
        vec![3.5]
    );
}

#[test]
fn mlp_two_layers_by_hand() {
    let cfg = ModelConfig {
        hidden: 2,
        sh_degree: 0,
        ..small_config()
    };
    let mut model = MignModel::zeroed(cfg).unwrap();
    let [l1, l2] = [model.encoder_mlp().layers[0], model.encoder_mlp().layers[1]];
    // rows index inputs
    set(&mut model, l1, &[1.0, -1.0, 2.0, 0.5], &[0.5, -1.0]);
    set(&mut model, l2, &[1.0, 0.0, -2.0, 3.0], &[0.0, 1.0]);
    let silu = |z: f64| z / (1.0 + (-z).exp());
    // z = [1 + 4 + 0.5, -1 + 1 - 1]
    let (a, b) = (silu(5.5), silu(-1.0));
    let expected = [a - 2.0 * b, 3.0 * b + 1.0];
    let out = model.mlp_apply(model.encoder_mlp(), &[1.0, 2.0]).unwrap();
    assert_close(&out, &expected, 1e-15);
    assert!(model.mlp_apply(model.encoder_mlp(), &[1.0]).is_err());
}

// ---------------------------------------------------------------------------
// encode

#[test]
fn single_station_fills_every_mesh_node() {
    let cfg = small_config();
    let mut model = MignModel::new(cfg.clone(), 3).unwrap();
    randomize(&mut model, 1);
    let mesh = MeshContext::new(&cfg).unwrap();
    let c = make_geo(30.0, -20.0).unwrap();
    let h = model.encode(&snap(&[c], &[0.7]), &mesh).unwrap();
    let mut input = vec![0.7];
    input.extend(weighted_basis(&model, model.sh_encoder(), c));
    let msg = model.mlp_apply(model.encoder_mlp(), &input).unwrap();
    for row in h.outer_iter() {
        assert_eq!(row.to_vec(), msg);
    }
}

#[test]
fn coincident_stations_match_single_station() {
    let cfg = ModelConfig {
        k_station_mesh: 2,
        ..small_config()
    };
    let model = MignModel::new(cfg.clone(), 5).unwrap();
    let mesh = MeshContext::new(&cfg).unwrap();
    let c = make_geo(-100.0, 45.0).unwrap();
    let one = model.encode(&snap(&[c], &[1.5]), &mesh).unwrap();
    let two = model.encode(&snap(&[c, c], &[1.5, 1.5]), &mesh).unwrap();
    assert_eq!(one, two);
}

#[test]
fn encoder_matches_reference() {
    let cfg = small_config();
    let mut model = MignModel::new(cfg.clone(), 0).unwrap();
    randomize(&mut model, 9);
    let mesh = MeshContext::new(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let coords = random_stations(25, &mut rng);
    let values: Vec<f64> = (0..25).map(|_| rng.random_range(-2.0..2.0)).collect();
    let h = model.encode(&snap(&coords, &values), &mesh).unwrap();
    let expected = ref_encode(&model, &mesh, &coords, &values);
    for (row, exp) in h.outer_iter().zip(&expected) {
        assert_close(row.as_slice().unwrap(), exp, 1e-12);
    }
}

// ---------------------------------------------------------------------------
// process

#[test]
fn zero_layers_project_the_augmented_state() {
    let cfg = ModelConfig {
        layers: 0,
        ..small_config()
    };
    let mut model = MignModel::new(cfg.clone(), 0).unwrap();
    randomize(&mut model, 4);
    let mesh = MeshContext::new(&cfg).unwrap();
    let h0: Vec<Vec<f64>> = (0..12)
        .map(|i| (0..4).map(|j| (i * 4 + j) as f64 * 0.1 - 2.0).collect())
        .collect();
    let out = model.process(&from_rows(&h0), &mesh).unwrap();
    let proj = model.processor_projection().unwrap();
    for (i, (row, &c)) in out.outer_iter().zip(mesh.mesh().nodes()).enumerate() {
        let mut input = h0[i].clone();
        input.extend(weighted_basis(&model, model.sh_processor(), c));
        assert_close(
            row.as_slice().unwrap(),
            &affine(&model, &proj, &input),
            1e-13,
        );
    }
}

#[test]
fn zero_processor_gives_zero_states() {
    let cfg = ModelConfig {
        layers: 2,
        ..small_config()
    };
    let mut model = MignModel::new(cfg.clone(), 0).unwrap();
    let ids: Vec<_> = model
        .message_mlps()
        .iter()
        .chain(model.update_mlps())
        .flat_map(|m| m.layers.iter().flat_map(|l| [l.weight, l.bias]))
        .collect();
    for id in ids {
        model.params_mut().tensor_mut(id).data_mut().fill(0.0);
    }
    let mesh = MeshContext::new(&cfg).unwrap();
    let h0 = Array2::from_elem((12, 4), 1.3);
    let out = model.process(&h0, &mesh).unwrap();
    assert!(out.iter().all(|&v| v == 0.0));
}

#[test]
fn one_round_on_complete_base_mesh_by_hand() {
    // H = 1, no SH, identity activation, single-layer MLPs:
    // m = a*h_src + b*h_dst + c, h' = p*h + q*mean(m) + r
    let cfg = ModelConfig {
        hidden: 1,
        mlp_layers: 1,
        processor_sh: false,
        activation: Activation::Identity,
        ..small_config()
    };
    let mut model = MignModel::zeroed(cfg.clone()).unwrap();
    let msg = model.message_mlps()[0].layers[0];
    let upd = model.update_mlps()[0].layers[0];
    set(&mut model, msg, &[0.5, -1.0], &[0.25]);
    set(&mut model, upd, &[2.0, 1.0], &[-0.5]);
    let mesh = MeshContext::new(&cfg).unwrap();
    let h: Vec<f64> = (0..12).map(|i| i as f64).collect();
    let out = model
        .process(
            &from_rows(&h.iter().map(|&v| vec![v]).collect::<Vec<_>>()),
            &mesh,
        )
        .unwrap();
    let total: f64 = h.iter().sum();
    for t in 0..12 {
        // every other node is a neighbour on the complete graph
        let mean_src = (total - h[t]) / 11.0;
        let m = 0.5 * mean_src - h[t] + 0.25;
        let expected = 2.0 * h[t] + m - 0.5;
        assert!((out[[t, 0]] - expected).abs() < 1e-12, "node {t}");
    }
}

#[test]
fn processor_matches_reference() {
    for (edge_distance, level, k) in [(false, 0, 11), (true, 1, 6)] {
        let cfg = ModelConfig {
            layers: 2,
            edge_distance,
            mesh_level: level,
            k_mesh_mesh: k,
            ..small_config()
        };
        let mut model = MignModel::new(cfg.clone(), 0).unwrap();
        randomize(&mut model, 11);
        let mesh = MeshContext::new(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h0: Vec<Vec<f64>> = (0..mesh.len())
            .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let out = model.process(&from_rows(&h0), &mesh).unwrap();
        let expected = ref_process(&model, &mesh, &h0);
        for (row, exp) in out.outer_iter().zip(&expected) {
            assert_close(row.as_slice().unwrap(), exp, 1e-12);
        }
    }
}

// ---------------------------------------------------------------------------
// decode

#[test]
fn zero_decoder_predicts_its_bias() {
    let cfg = small_config();
    let mut model = MignModel::new(cfg.clone(), 1).unwrap();
    let layers = model.decoder_mlp().layers.clone();
    for lin in &layers {
        model
            .params_mut()
            .tensor_mut(lin.weight)
            .data_mut()
            .fill(0.0);
        model.params_mut().tensor_mut(lin.bias).data_mut().fill(0.0);
    }
    model
        .params_mut()
        .tensor_mut(layers.last().unwrap().bias)
        .data_mut()[0] = 2.75;
    let mesh = MeshContext::new(&cfg).unwrap();
    let targets = random_stations(9, &mut ChaCha8Rng::seed_from_u64(0));
    let h = Array2::from_elem((12, 4), -0.4);
    let out = model.decode(&h, &targets, &mesh).unwrap();
    assert_eq!(out, vec![2.75; 9]);
    assert!(model.decode(&h, &[], &mesh).is_err());
}

#[test]
fn identical_messages_give_identical_predictions() {
    let cfg = ModelConfig {
        decoder_location: DecoderLocation::None,
        ..small_config()
    };
    let model = MignModel::new(cfg.clone(), 2).unwrap();
    let mesh = MeshContext::new(&cfg).unwrap();
    let targets = random_stations(6, &mut ChaCha8Rng::seed_from_u64(1));
    let h = Array2::from_elem((12, 4), 0.9);
    let out = model.decode(&h, &targets, &mesh).unwrap();
    assert!(out.iter().all(|&v| v == out[0]));
}

#[test]
fn three_targets_by_hand() {
    // H = 1, decoder scalar = 3*h - 1, k = 2 nearest mesh nodes
    let cfg = ModelConfig {
        hidden: 1,
        mlp_layers: 1,
        k_station_mesh: 2,
        decoder_location: DecoderLocation::None,
        ..small_config()
    };
    let mut model = MignModel::zeroed(cfg.clone()).unwrap();
    let lin = model.decoder_mlp().layers[0];
    set(&mut model, lin, &[3.0], &[-1.0]);
    let mesh = MeshContext::new(&cfg).unwrap();
    let nodes = mesh.mesh().nodes().to_vec();
    let h: Vec<f64> = (0..12).map(|i| (i as f64).powi(2) / 10.0).collect();
    // a target right next to node 0, one next to node 5, and one midway
    // between equatorial nodes 4 and 5, which is closer to the nodes of
    // the two outer rings at the same longitude
    let near0 = make_geo(nodes[0].lon_deg() + 1.0, nodes[0].lat_deg() - 1.0).unwrap();
    let near5 = make_geo(nodes[5].lon_deg(), nodes[5].lat_deg() + 0.5).unwrap();
    let mid = make_geo((nodes[4].lon_deg() + nodes[5].lon_deg()) / 2.0, 0.0).unwrap();
    let targets = [near0, near5, mid];
    let out = model
        .decode(
            &from_rows(&h.iter().map(|&v| vec![v]).collect::<Vec<_>>()),
            &targets,
            &mesh,
        )
        .unwrap();
    for (i, &t) in targets.iter().enumerate() {
        let nb = brute_knn(&nodes, t, 2);
        let expected = nb.iter().map(|&n| 3.0 * h[n] - 1.0).sum::<f64>() / 2.0;
        assert!((out[i] - expected).abs() < 1e-12, "target {i}");
    }
    let mid_nb = brute_knn(&nodes, mid, 2);
    assert!(mid_nb.iter().all(|&n| !(4..8).contains(&n)), "{mid_nb:?}");
}

#[test]
fn decoder_matches_reference() {
    for loc in [
        DecoderLocation::Sh,
        DecoderLocation::Raw,
        DecoderLocation::None,
    ] {
        let cfg = ModelConfig {
            decoder_location: loc,
            ..small_config()
        };
        let mut model = MignModel::new(cfg.clone(), 0).unwrap();
        randomize(&mut model, 8);
        let mesh = MeshContext::new(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let h: Vec<Vec<f64>> = (0..12)
            .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let targets = random_stations(15, &mut rng);
        let out = model.decode(&from_rows(&h), &targets, &mesh).unwrap();
        assert_close(&out, &ref_decode(&model, &mesh, &h, &targets), 1e-12);
    }
}

// ---------------------------------------------------------------------------
// forward

#[test]
fn forward_matches_reference_on_tiny_config() {
    let cfg = ModelConfig {
        hidden: 5,
        ..ModelConfig::tiny()
    };
    let model = MignModel::new(cfg.clone(), 21).unwrap();
    let mesh = MeshContext::new(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let coords = random_stations(30, &mut rng);
    let values: Vec<f64> = (0..30).map(|_| rng.random_range(-2.0..2.0)).collect();
    let targets = random_stations(12, &mut rng);
    let out = model
        .forward(&snap(&coords, &values), &targets, &mesh)
        .unwrap();
    assert_close(
        &out,
        &ref_forward(&model, &mesh, &coords, &values, &targets),
        1e-11,
    );
}

#[test]
fn forward_shapes_and_duplicates() {
    let cfg = small_config();
    let model = MignModel::new(cfg.clone(), 4).unwrap();
    let mesh = MeshContext::new(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let coords = random_stations(20, &mut rng);
    let values: Vec<f64> = (0..20).map(|i| (i as f64 * 0.3).sin()).collect();
    let s = snap(&coords, &values);
    let same = model.forward(&s, &coords, &mesh).unwrap();
    assert_eq!(same.len(), 20);
    let unseen = random_stations(7, &mut rng);
    let other = model.forward(&s, &unseen, &mesh).unwrap();
    assert_eq!(other.len(), 7);
    assert!(same.iter().chain(&other).all(|v| v.is_finite()));
    let dup = [unseen[0], unseen[1], unseen[0]];
    let out = model.forward(&s, &dup, &mesh).unwrap();
    assert_eq!(out[0], out[2]);
}

#[test]
fn mesh_context_must_match_config() {
    let cfg = small_config();
    let model = MignModel::new(cfg.clone(), 0).unwrap();
    let other = MeshContext::new(&ModelConfig {
        mesh_level: 1,
        ..cfg
    })
    .unwrap();
    let c = make_geo(0.0, 0.0).unwrap();
    assert!(model.forward(&snap(&[c], &[1.0]), &[c], &other).is_err());
}

#[test]
fn decoder_is_local() {
    let cfg = ModelConfig {
        mesh_level: 1,
        ..small_config()
    };
    let model = MignModel::new(cfg.clone(), 12).unwrap();
    let mesh = MeshContext::new(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let h: Array2<f64> = Array2::from_shape_fn((48, 4), |_| rng.random_range(-1.0..1.0));
    let target = make_geo(10.0, 50.0).unwrap();
    let before = model.decode(&h, &[target], &mesh).unwrap()[0];
    let near = brute_knn(mesh.mesh().nodes(), target, cfg.k_station_mesh);
    let mut masked = h.clone();
    for (i, mut row) in masked.outer_iter_mut().enumerate() {
        if !near.contains(&i) {
            row.fill(0.0);
        }
    }
    let after = model.decode(&masked, &[target], &mesh).unwrap()[0];
    assert_eq!(before.to_bits(), after.to_bits());
}

#[test]
fn forward_is_deterministic() {
    let cfg = ModelConfig::tiny();
    let mesh = MeshContext::new(&cfg).unwrap();
    let coords = random_stations(40, &mut ChaCha8Rng::seed_from_u64(0));
    let values: Vec<f64> = (0..40).map(|i| i as f64 / 40.0).collect();
    let run = || {
        let model = MignModel::new(cfg.clone(), 99).unwrap();
        model
            .forward(&snap(&coords, &values), &coords, &mesh)
            .unwrap()
    };
    let (a, b) = (run(), run());
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn station_order_does_not_matter(seed in 0u64..1000) {
        let cfg = small_config();
        let model = MignModel::new(cfg.clone(), seed).unwrap();
        let mesh = MeshContext::new(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coords = random_stations(15, &mut rng);
        let values: Vec<f64> = (0..15).map(|_| rng.random_range(-3.0..3.0)).collect();
        let targets = random_stations(5, &mut rng);
        let base = model.forward(&snap(&coords, &values), &targets, &mesh).unwrap();
        let mut perm: Vec<usize> = (0..15).collect();
        perm.shuffle(&mut rng);
        let pc: Vec<GeoCoord> = perm.iter().map(|&i| coords[i]).collect();
        let pv: Vec<f64> = perm.iter().map(|&i| values[i]).collect();
        let shuffled = model.forward(&snap(&pc, &pv), &targets, &mesh).unwrap();
        prop_assert_eq!(base, shuffled);
    }

    #[test]
    fn one_prediction_per_target(n_in in 1usize..30, n_out in 1usize..30, seed in 0u64..100) {
        let cfg = small_config();
        let model = MignModel::new(cfg.clone(), seed).unwrap();
        let mesh = MeshContext::new(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coords = random_stations(n_in, &mut rng);
        let values = vec![0.5; n_in];
        let targets = random_stations(n_out, &mut rng);
        let out = model.forward(&snap(&coords, &values), &targets, &mesh).unwrap();
        prop_assert_eq!(out.len(), n_out);
        prop_assert!(out.iter().all(|v| v.is_finite()));
    }
}

// ---------------------------------------------------------------------------
// temporal head

fn temporal_config(n_in: usize, m: usize) -> ModelConfig {
    ModelConfig {
        input_steps: n_in,
        output_steps: m,
        temporal_head: true,
        ..small_config()
    }
}

#[test]
fn identity_head_equals_forward() {
    let cfg = temporal_config(1, 1);
    let mut model = MignModel::new(cfg.clone(), 6).unwrap();
    let t = model.temporal_projection().unwrap();
    let mut eye = vec![0.0; 16];
    for i in 0..4 {
        eye[i * 4 + i] = 1.0;
    }
    set(&mut model, t, &eye, &[0.0; 4]);
    let mesh = MeshContext::new(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let coords = random_stations(18, &mut rng);
    let values: Vec<f64> = (0..18).map(|_| rng.random_range(-1.0..1.0)).collect();
    let targets = random_stations(8, &mut rng);
    let s = snap(&coords, &values);
    let single = model.forward(&s, &targets, &mesh).unwrap();
    let multi = model.temporal_forward(&[s], &[targets], &mesh).unwrap();
    assert_eq!(multi, vec![single]);
}

#[test]
fn zero_head_and_decoder_predict_bias_everywhere() {
    let cfg = temporal_config(3, 3);
    let mut model = MignModel::new(cfg.clone(), 1).unwrap();
    let t = model.temporal_projection().unwrap();
    model.params_mut().tensor_mut(t.weight).data_mut().fill(0.0);
    model.params_mut().tensor_mut(t.bias).data_mut().fill(0.0);
    let layers = model.decoder_mlp().layers.clone();
    for lin in &layers {
        model
            .params_mut()
            .tensor_mut(lin.weight)
            .data_mut()
            .fill(0.0);
        model.params_mut().tensor_mut(lin.bias).data_mut().fill(0.0);
    }
    model
        .params_mut()
        .tensor_mut(layers.last().unwrap().bias)
        .data_mut()[0] = -1.25;
    let mesh = MeshContext::new(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let inputs: Vec<StationSnapshot> = (0..3)
        .map(|_| {
            let c = random_stations(10, &mut rng);
            snap(&c, &[1.0; 10])
        })
        .collect();
    let targets: Vec<Vec<GeoCoord>> = (0..3).map(|i| random_stations(4 + i, &mut rng)).collect();
    let out = model.temporal_forward(&inputs, &targets, &mesh).unwrap();
    assert_eq!(out.len(), 3);
    for (i, step) in out.iter().enumerate() {
        assert_eq!(step, &vec![-1.25; 4 + i]);
    }
}

#[test]
fn two_in_two_out_head_matches_manual_concatenation() {
    let cfg = temporal_config(2, 2);
    let mut model = MignModel::new(cfg.clone(), 17).unwrap();
    randomize(&mut model, 17);
    let mesh = MeshContext::new(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let days: Vec<(Vec<GeoCoord>, Vec<f64>)> = (0..2)
        .map(|_| {
            let c = random_stations(12, &mut rng);
            let v = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
            (c, v)
        })
        .collect();
    let targets: Vec<Vec<GeoCoord>> = (0..2).map(|_| random_stations(5, &mut rng)).collect();
    let snaps: Vec<StationSnapshot> = days.iter().map(|(c, v)| snap(c, v)).collect();
    let out = model.temporal_forward(&snaps, &targets, &mesh).unwrap();

    let states: Vec<Vec<Vec<f64>>> = days
        .iter()
        .map(|(c, v)| ref_process(&model, &mesh, &ref_encode(&model, &mesh, c, v)))
        .collect();
    let head = model.temporal_projection().unwrap();
    let projected: Vec<Vec<f64>> = (0..12)
        .map(|n| {
            let cat: Vec<f64> = states.iter().flat_map(|s| s[n].clone()).collect();
            affine(&model, &head, &cat)
        })
        .collect();
    for step in 0..2 {
        let h: Vec<Vec<f64>> = projected
            .iter()
            .map(|r| r[step * 4..(step + 1) * 4].to_vec())
            .collect();
        assert_close(
            &out[step],
            &ref_decode(&model, &mesh, &h, &targets[step]),
            1e-11,
        );
    }
}

#[test]
fn temporal_forward_needs_a_head() {
    let cfg = small_config();
    let model = MignModel::new(cfg.clone(), 0).unwrap();
    let mesh = MeshContext::new(&cfg).unwrap();
    let c = make_geo(0.0, 0.0).unwrap();
    assert!(model
        .temporal_forward(&[snap(&[c], &[1.0])], &[vec![c]], &mesh)
        .is_err());
}
