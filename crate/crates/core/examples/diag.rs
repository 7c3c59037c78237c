//! Scratch diagnostic for simulator tuning (not part of the deliverable).

use cocoon_core::conformal::{nc_score, NcTarget};
use cocoon_core::sim::*;
use std::collections::BTreeMap;

fn main() {
    let spec = SceneSpec {
        num_queries: 60,
        num_classes: 10,
        num_layers: 6,
        feature_dim: 16,
        class_mean_scale: 0.65,
        shared_mean_fraction: 0.85,
        informativeness_contrast: 0.2,
        family_seed: 0,
        ..SceneSpec::default()
    };
    let cfg = SimTrainConfig {
        train_scenes: 10,
        calib_scenes: 20,
        aligner_hidden: 64,
        aligned_dim: 32,
        epochs: 300,
        ..SimTrainConfig::default()
    };
    let artifact = train_sim_artifact(&spec, &cfg, BTreeMap::new(), 7).unwrap();
    let pool = artifact.nc_pools.last().unwrap();
    let s = pool.scores();
    let q = |p: f64| s[((s.len() as f64 - 1.0) * p) as usize];
    println!(
        "pool: p10 {:.3} p50 {:.3} p90 {:.3} p99 {:.3} max {:.3}",
        q(0.1),
        q(0.5),
        q(0.9),
        q(0.99),
        s[s.len() - 1]
    );

    let h0 = artifact.aligner.forward(&vec![0.0; 16]).unwrap();
    let z = nc_score(h0.as_slice(), &artifact.fis, NcTarget::Nearest).unwrap();
    println!(
        "h(0): nc {:.3} (fi {}), p-value {:.4}",
        z.score,
        z.fi_index,
        pool.p_value(z.score)
    );
    println!(
        "fi norms: {:?}",
        artifact
            .fis
            .nodes()
            .iter()
            .map(|n| (n.norm() * 100.0).round() / 100.0)
            .collect::<Vec<_>>()
    );
    println!(
        "min pairwise fi distance: {:.3}",
        artifact.fis.min_pairwise_distance()
    );

    let eval_spec = SceneSpec {
        num_queries: 400,
        ..spec.clone()
    };
    let scene = generate_scene(&eval_spec, 33);
    for (name, kind, m) in [
        ("clean_a      ", Corruption::None, 0),
        ("clean_b      ", Corruption::None, 1),
        ("noise_a(1.4) ", Corruption::NoiseA(1.4), 0),
        ("dropout(0.12)", Corruption::DropoutB(0.12), 1),
        ("misalign(1.5)", Corruption::Misalign(1.5), 0),
    ] {
        let c = corrupt(&scene, kind, 5);
        let mut ncs = Vec::new();
        let mut ps = Vec::new();
        for qr in c.queries.iter().filter(|q| q.label.is_some()) {
            let aligned = artifact
                .aligner
                .forward(qr.features[m].last().unwrap().as_slice())
                .unwrap();
            let sc = nc_score(aligned.as_slice(), &artifact.fis, NcTarget::Nearest).unwrap();
            ncs.push(sc.score);
            ps.push(pool.p_value(sc.score));
        }
        ncs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mean_p: f64 = ps.iter().sum::<f64>() / ps.len() as f64;
        println!(
            "{name}: modality {m} nc p50 {:.3} mean_p {:.3}",
            ncs[ncs.len() / 2],
            mean_p
        );
    }

    // Per-query dropout analysis: who leans where, and who flips.
    let head = train_head(&spec, 8, 200, 0.05, 7).unwrap();
    let dropped = corrupt(&scene, Corruption::DropoutB(0.45), 5);
    let stat = run_pipeline(
        &dropped,
        &artifact,
        &head,
        &PipelineConfig::static_fusion(),
    )
    .unwrap();
    let adap = run_pipeline(&dropped, &artifact, &head, &PipelineConfig::adaptive()).unwrap();
    let mut flips = [[0usize; 2]; 2]; // [static correct][adaptive correct]
    let mut flip_details: Vec<String> = Vec::new();
    let mut low_w = 0usize;
    let mut low_w_flip = 0usize;
    let mut hist = [0usize; 10];
    for (s_r, a_r) in stat.records.iter().zip(&adap.records) {
        let Some(label) = s_r.label else { continue };
        let sc = (s_r.predicted == label) as usize;
        let ac = (a_r.predicted == label) as usize;
        flips[sc][ac] += 1;
        if sc != ac && flip_details.len() < 14 {
            let u = &a_r.uncertainty;
            flip_details.push(format!(
                "sc={sc} ac={ac} P_A={:.3} P_B={:.3} S_A={:.2} S_B={:.2} W_A={:.3} clip={} degen={}",
                u.modality_a.p, u.modality_b.p, u.modality_a.s, u.modality_b.s, u.modality_a.w,
                u.clipped, u.degenerate));
        }
        let w = a_r.uncertainty.modality_a.w;
        hist[(w * 9.999) as usize] += 1;
        if w < 0.4 {
            low_w += 1;
            if sc == 1 && ac == 0 {
                low_w_flip += 1;
            }
        }
    }
    println!("dropout flips [static][adaptive]: both_ok {} s_ok_a_bad {} s_bad_a_ok {} both_bad {}",
        flips[1][1], flips[1][0], flips[0][1], flips[0][0]);
    println!("W_A histogram (deciles): {hist:?}");
    println!("queries with W_A < 0.4: {low_w}, of which static-ok->adaptive-bad: {low_w_flip}");
    let mut pa_mean = 0.0;
    let mut pb_mean = 0.0;
    let mut sa_mean = 0.0;
    let mut sb_mean = 0.0;
    let mut n = 0.0;
    for r in &adap.records {
        if r.label.is_none() { continue; }
        pa_mean += r.uncertainty.modality_a.p;
        pb_mean += r.uncertainty.modality_b.p;
        sa_mean += r.uncertainty.modality_a.s;
        sb_mean += r.uncertainty.modality_b.s;
        n += 1.0;
    }
    println!("means: P_A {:.3} P_B {:.3} S_A {:.3} S_B {:.3}", pa_mean/n, pb_mean/n, sa_mean/n, sb_mean/n);
    for d in &flip_details {
        println!("flip: {d}");
    }
}
// Appended: per-query dropout analysis.
#[allow(dead_code)]
fn unused() {}
