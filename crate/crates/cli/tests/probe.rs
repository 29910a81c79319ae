use sdcwarp::flow::FlowField;
use sdcwarp::optimize::{FitOptions, FitPhase, FitSchedule, ParamSubset, PhaseLoss};
use sdcwarp::pipeline::{
    predict_next, Method, ParamsSource, PredictConfig, SequenceInput, FLOW_BLOCK,
    FLOW_SEARCH_RADIUS,
};
use sdcwarp::synth::make_translating_square;
use sdcwarp::Frame;

fn phase(subset: ParamSubset, loss: PhaseLoss, lr: f64, iters: usize) -> FitPhase {
    FitPhase { subset, loss, lr, iters }
}

fn crisp(joint: usize, refine: usize, settle: usize) -> FitSchedule {
    FitSchedule {
        phases: vec![
            phase(ParamSubset::MotionOnly, PhaseLoss::L1, 1e-2, 80),
            phase(ParamSubset::KernelsOnly, PhaseLoss::KernelInit, 1e-2, 60),
            phase(ParamSubset::All, PhaseLoss::L1, 1e-3, joint),
            phase(ParamSubset::KernelsOnly, PhaseLoss::KernelInit, 1e-3, 40),
            phase(ParamSubset::MotionOnly, PhaseLoss::L1, 1e-3, refine),
            phase(ParamSubset::MotionOnly, PhaseLoss::L1, 1e-4, settle),
        ],
    }
}

fn downsample2(frame: &Frame) -> Frame {
    let (h, w, _) = frame.shape();
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Frame::new(oh, ow, 1).unwrap();
    for y in 0..oh {
        for x in 0..ow {
            let s = frame.get(2 * x, 2 * y, 0)
                + frame.get(2 * x + 1, 2 * y, 0)
                + frame.get(2 * x, 2 * y + 1, 0)
                + frame.get(2 * x + 1, 2 * y + 1, 0);
            out.set(x, y, 0, s / 4.0);
        }
    }
    out
}

fn block_starts(len: usize) -> Vec<usize> {
    let mut starts: Vec<usize> = (0..)
        .map(|i| i * FLOW_BLOCK)
        .take_while(|&s| s < len)
        .map(|s| s.min(len - FLOW_BLOCK))
        .collect();
    starts.dedup();
    starts
}

fn candidate_offsets() -> Vec<(isize, isize)> {
    let r = FLOW_SEARCH_RADIUS;
    let mut offs: Vec<(isize, isize)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dy, dx)))
        .collect();
    offs.sort_by_key(|&(dy, dx)| (dx * dx + dy * dy, dy, dx));
    offs
}

fn block_cost(prev: &Frame, next: &Frame, x0: usize, y0: usize, cu: isize, cv: isize) -> f64 {
    let (h, w, _) = prev.shape();
    let clamp = |v: isize, hi: usize| v.clamp(0, hi as isize - 1) as usize;
    let mut cost = 0.0;
    for y in y0..y0 + FLOW_BLOCK {
        for x in x0..x0 + FLOW_BLOCK {
            let px = clamp(x as isize + cu, w);
            let py = clamp(y as isize + cv, h);
            cost += (next.get(x, y, 0) - prev.get(px, py, 0)).abs();
        }
    }
    cost
}

fn upsample_flow(flow: &FlowField, out_h: usize, out_w: usize) -> FlowField {
    let (in_h, in_w) = flow.shape();
    let src = flow.to_frame();
    let mut out = FlowField::new(out_h, out_w).unwrap();
    let sx = in_w as f64 / out_w as f64;
    let sy = in_h as f64 / out_h as f64;
    let gain_u = out_w as f64 / in_w as f64;
    let gain_v = out_h as f64 / in_h as f64;
    for y in 0..out_h {
        for x in 0..out_w {
            let xs = (x as f64 + 0.5) * sx - 0.5;
            let ys = (y as f64 + 0.5) * sy - 0.5;
            let u = sdcwarp::resample::bilinear_sample(&src, xs, ys, 0);
            let v = sdcwarp::resample::bilinear_sample(&src, xs, ys, 1);
            out.set(x, y, u * gain_u, v * gain_v);
        }
    }
    out
}

/// Instrumented replica: prints every block decision at every level.
fn traced_flow(prev: &Frame, next: &Frame, zero_pass: bool, label: &str) -> FlowField {
    let (h, w, _) = prev.shape();
    let mut levels = vec![(prev.clone(), next.clone())];
    while levels.len() < 3 {
        let (p, n) = levels.last().unwrap();
        if p.height() / 2 < FLOW_BLOCK || p.width() / 2 < FLOW_BLOCK {
            break;
        }
        let c = (downsample2(p), downsample2(n));
        levels.push(c);
    }
    let offsets = candidate_offsets();
    let r = FLOW_SEARCH_RADIUS;
    let mut flow: Option<FlowField> = None;
    for (li, (p, n)) in levels.iter().enumerate().rev() {
        let seed = match &flow {
            None => FlowField::new(p.height(), p.width()).unwrap(),
            Some(coarse) => upsample_flow(coarse, p.height(), p.width()),
        };
        let mut out = FlowField::new(p.height(), p.width()).unwrap();
        for &y0 in &block_starts(p.height()) {
            for &x0 in &block_starts(p.width()) {
                let (su, sv) = seed.get(x0 + FLOW_BLOCK / 2, y0 + FLOW_BLOCK / 2);
                let (su, sv) = (su.round() as isize, sv.round() as isize);
                let mut best = (f64::INFINITY, 0isize, 0isize);
                for &(dy, dx) in &offsets {
                    let (cu, cv) = (su + dx, sv + dy);
                    let cost = block_cost(p, n, x0, y0, cu, cv);
                    if cost < best.0 {
                        best = (cost, cu, cv);
                    }
                }
                let seed_best = best;
                let mut flipped = false;
                if zero_pass && (su, sv) != (0, 0) {
                    for &(dy, dx) in &offsets {
                        if (dx - su).abs() <= r && (dy - sv).abs() <= r {
                            continue;
                        }
                        let cost = block_cost(p, n, x0, y0, dx, dy);
                        if cost * 2.0 < best.0 {
                            best = (cost, dx, dy);
                            flipped = true;
                        }
                    }
                }
                if su != 0 || sv != 0 || flipped {
                    println!(
                        "{label} L{li} blk({x0},{y0}) seed({su},{sv}) seedbest({:.3} @ {},{}) final({:.3} @ {},{}){}",
                        seed_best.0, seed_best.1, seed_best.2, best.0, best.1, best.2,
                        if flipped { " FLIP" } else { "" }
                    );
                }
                for y in y0..y0 + FLOW_BLOCK {
                    for x in x0..x0 + FLOW_BLOCK {
                        out.set(x, y, best.1 as f64, best.2 as f64);
                    }
                }
            }
        }
        flow = Some(out);
    }
    let f = flow.unwrap();
    let mut hist: std::collections::BTreeMap<(i64, i64), usize> = std::collections::BTreeMap::new();
    for y in (4..h).step_by(8) {
        for x in (4..w).step_by(8) {
            let (u, v) = f.get(x, y);
            *hist.entry((u as i64, v as i64)).or_default() += 1;
        }
    }
    print!("{label} final:");
    for ((u, v), c) in &hist {
        print!(" ({u},{v})x{c}");
    }
    println!();
    f
}

#[test]
fn probe_step_flows() {
    let scene = make_translating_square(28, 28, 5, 1, 10).unwrap();
    let cfg = PredictConfig {
        sdc_n: 3,
        kernel_n: 3,
        schedule: crisp(120, 60, 40),
        fit: FitOptions::default(),
    };
    let mut window: Vec<Frame> = scene.frames[..5].to_vec();
    for step in 0..5 {
        let prev = &window[3];
        let newest = &window[4];
        let flow = sdcwarp::pipeline::estimate_flow(prev, newest).unwrap();
        let (h, w) = (flow.height(), flow.width());
        let mut hist: std::collections::BTreeMap<(i64, i64), usize> =
            std::collections::BTreeMap::new();
        for y in (4..h).step_by(8) {
            for x in (4..w).step_by(8) {
                let (u, v) = flow.get(x, y);
                *hist.entry((u.round() as i64, v.round() as i64)).or_default() += 1;
            }
        }
        print!("step {} flow:", step + 1);
        for ((u, v), count) in &hist {
            print!(" ({u},{v})x{count}");
        }
        let input = SequenceInput::new(window.clone(), None).unwrap();
        let pred = predict_next(&input, Method::Sdc, ParamsSource::Fitted, &cfg).unwrap();
        let truth = &scene.frames[5 + step];
        let (px, py) = centroid(&pred.frame);
        let (tx, ty) = centroid(truth);
        let off = (px - tx).hypot(py - ty);
        println!("  off {off:.3}px");
        window.remove(0);
        window.push(pred.frame);
    }
}

fn centroid(frame: &Frame) -> (f64, f64) {
    let (h, w, c) = frame.shape();
    let (mut sx, mut sy, mut mass) = (0.0, 0.0, 0.0);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let v = frame.get(x, y, ch);
                sx += v * x as f64;
                sy += v * y as f64;
                mass += v;
            }
        }
    }
    (sx / mass, sy / mass)
}
