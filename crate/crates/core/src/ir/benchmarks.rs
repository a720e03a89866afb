//! The shipped benchmark programs and their ground-truth counterparts.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ground_truth::{ControllerBuilder, GroundTruthProgram, NoiseSpec};
use super::lower::lower_argmax;
use super::{Expr, Nonlinearity, Program, SafeInterval, SafeSet, Stmt, VarId};
use crate::autodiff::{Activation, MlpSpec};
use crate::domain::Interval;
use crate::error::{Error, Result};

pub const BENCHMARKS: [&str; 9] = [
    "pattern1",
    "pattern2",
    "pattern3",
    "pattern4",
    "pattern5",
    "thermostat",
    "ac",
    "racetrack",
    "cartpole",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    /// Hidden layer widths of every neural module.
    pub hidden: Vec<usize>,
    /// Overrides the benchmark's loop length (horizon for cartpole).
    pub loop_length: Option<usize>,
    /// Overrides the input box.
    pub input: Option<Vec<Interval<f64>>>,
    pub thermostat: ThermostatConfig,
    pub ac: AcConfig,
    pub racetrack: RacetrackConfig,
    pub cartpole: CartpoleConfig,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64, 64],
            loop_length: None,
            input: None,
            thermostat: ThermostatConfig::default(),
            ac: AcConfig::default(),
            racetrack: RacetrackConfig::default(),
            cartpole: CartpoleConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThermostatConfig {
    /// 2 (cool/heat) or 3 (cool/low heat/high heat).
    pub branches: usize,
    pub safe: (f64, f64),
    /// COOLING(x) = x − cool_rate·(x − cool_target).
    pub cool_rate: f64,
    pub cool_target: f64,
    /// WARMING(x, h) = x + heat_gain·h − warm_rate·(x − warm_target).
    pub warm_rate: f64,
    pub warm_target: f64,
    pub heat_gain: f64,
    /// The networks see `(x − input_offset)·input_scale`.
    pub input_offset: f64,
    pub input_scale: f64,
    /// Ground truth: heater turns on at or below this temperature...
    pub gt_on_below: f64,
    /// ...and stays on while at or below this one.
    pub gt_off_above: f64,
    pub gt_heat: f64,
    /// Three-branch ground truth: low/high heat levels and switch points.
    pub gt_low_heat: f64,
    pub gt_high_heat: f64,
    pub gt_high_below: f64,
    pub noise: f64,
}

impl Default for ThermostatConfig {
    fn default() -> Self {
        Self {
            branches: 2,
            safe: (55.0, 83.0),
            cool_rate: 0.1,
            cool_target: 60.0,
            warm_rate: 0.1,
            warm_target: 75.0,
            heat_gain: 5.0,
            input_offset: 70.0,
            input_scale: 0.1,
            gt_on_below: 62.0,
            gt_off_above: 78.0,
            gt_heat: 0.2,
            gt_low_heat: 0.15,
            gt_high_heat: 0.3,
            gt_high_below: 66.0,
            noise: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcConfig {
    pub speed: f64,
    pub lateral: f64,
    pub intruder_speed: f64,
    /// Minimum squared separation.
    pub safe_dist2: f64,
    /// Ground truth leaves CRUISE when the squared separation is at most this.
    pub trigger_dist2: f64,
    pub left_steps: usize,
    pub straight_steps: usize,
    pub right_steps: usize,
    /// Encoding of one step count in the `step` variable.
    pub step_unit: f64,
}

impl Default for AcConfig {
    fn default() -> Self {
        Self {
            speed: 5.0,
            lateral: 3.0,
            intruder_speed: 4.0,
            safe_dist2: 40.0,
            trigger_dist2: 500.0,
            left_steps: 3,
            straight_steps: 5,
            right_steps: 3,
            step_unit: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RacetrackConfig {
    /// Lateral corridor outside the widened section.
    pub lane: (f64, f64),
    /// Lateral corridor inside the widened section.
    pub wide_lane: (f64, f64),
    /// Forward extent of the widened section.
    pub wide_rows: (f64, f64),
    /// Minimum lateral separation of the two agents.
    pub crash_gap: f64,
    /// Ground truth: rows during which agent 1 swerves up and agent 2
    /// swerves down before both go straight.
    pub gt_swerve_rows: f64,
    pub noise_prob: f64,
}

impl Default for RacetrackConfig {
    fn default() -> Self {
        Self {
            lane: (1.0, 8.0),
            wide_lane: (-2.0, 11.0),
            wide_rows: (6.5, 13.5),
            crash_gap: 1.0,
            gt_swerve_rows: 2.0,
            noise_prob: 0.25,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CartpoleSafety {
    Position,
    Angle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CartpoleConfig {
    pub cart_mass: f64,
    pub pole_mass: f64,
    pub pole_half_length: f64,
    pub gravity: f64,
    pub dt: f64,
    /// force = force_scale·(p1 − p0).
    pub force_scale: f64,
    /// Explicit dynamics; derived from the physical constants when absent.
    pub a: Option<[[f64; 4]; 4]>,
    pub b: Option<[f64; 4]>,
    /// Expert state feedback u = −K·s.
    pub expert_gain: [f64; 4],
    pub safety: CartpoleSafety,
    pub position_bound: f64,
    pub angle_bound: f64,
    pub init_half_width: f64,
}

impl Default for CartpoleConfig {
    fn default() -> Self {
        Self {
            cart_mass: 1.0,
            pole_mass: 0.1,
            pole_half_length: 0.5,
            gravity: 9.8,
            dt: 0.02,
            force_scale: 10.0,
            a: None,
            b: None,
            expert_gain: [-0.2905, -0.9794, -25.4373, -6.4484],
            safety: CartpoleSafety::Position,
            position_bound: 0.1,
            angle_bound: 0.2095,
            init_half_width: 0.05,
        }
    }
}

impl CartpoleConfig {
    /// Euler step of the cart-pole linearized about the upright equilibrium;
    /// state order (x, ẋ, angle, angular velocity).
    pub fn dynamics(&self) -> ([[f64; 4]; 4], [f64; 4]) {
        let total = self.cart_mass + self.pole_mass;
        let l = self.pole_half_length;
        let den = l * (4.0 / 3.0 - self.pole_mass / total);
        let ang_th = self.gravity / den;
        let ang_f = -1.0 / (total * den);
        let acc_f = 1.0 / total - self.pole_mass * l / total * ang_f;
        let acc_th = -self.pole_mass * l / total * ang_th;
        let dt = self.dt;
        let derived_a = [
            [1.0, dt, 0.0, 0.0],
            [0.0, 1.0, dt * acc_th, 0.0],
            [0.0, 0.0, 1.0, dt],
            [0.0, 0.0, dt * ang_th, 1.0],
        ];
        let derived_b = [0.0, dt * acc_f, 0.0, dt * ang_f];
        (self.a.unwrap_or(derived_a), self.b.unwrap_or(derived_b))
    }
}

/// A trainable program plus, for the case studies, its ground truth.
#[derive(Clone, Debug)]
pub struct Benchmark {
    pub program: Program,
    pub ground_truth: Option<GroundTruthProgram>,
}

pub fn build_benchmark(name: &str, cfg: &BenchmarkConfig) -> Result<Benchmark> {
    if cfg.hidden.iter().any(|&w| w == 0) {
        return Err(Error::Config("hidden widths must be positive".into()));
    }
    let mut b = match name {
        "pattern1" | "pattern2" | "pattern3" | "pattern4" | "pattern5" => Benchmark {
            program: pattern(name, cfg),
            ground_truth: None,
        },
        "thermostat" => thermostat(cfg)?,
        "ac" => aircraft(cfg)?,
        "racetrack" => racetrack(cfg)?,
        "cartpole" => cartpole(cfg)?,
        other => return Err(Error::UnknownBenchmark(other.to_string())),
    };
    if let Some(input) = &cfg.input {
        if input.len() != b.program.inputs.len() {
            return Err(Error::Config(format!(
                "{name} has {} inputs, config gives {}",
                b.program.inputs.len(),
                input.len()
            )));
        }
        for (spec, iv) in b.program.inputs.iter_mut().zip(input) {
            spec.interval = *iv;
        }
        if let Some(gt) = &mut b.ground_truth {
            gt.program.inputs = b.program.inputs.clone();
        }
    }
    Ok(b)
}

fn net(cfg: &BenchmarkConfig, input: usize, output: usize, last: Activation) -> MlpSpec {
    MlpSpec::feed_forward(input, &cfg.hidden, output, Activation::Relu, last)
}

fn at_most(hi: f64) -> SafeSet {
    SafeSet::single(vec![SafeInterval::at_most(hi)])
}

fn pattern(name: &str, cfg: &BenchmarkConfig) -> Program {
    let mut p = Program::new(name);
    let x = p.var("x");
    let y = p.var("y");
    let z = p.var("z");
    p.modules.insert("nn".into(), net(cfg, 1, 1, Activation::None));
    let (lo, hi) = if name == "pattern5" { (-1.0, 1.0) } else { (-5.0, 5.0) };
    p.add_input(x, lo, hi);
    let call = Stmt::call("nn", vec![x], vec![y]);
    let c = |v: f64| Expr::constant(v);
    let body = match name {
        "pattern1" => vec![
            call,
            Stmt::if_leq(Expr::var(y), 1.0, Stmt::assign(z, c(10.0)), Stmt::assign(z, c(1.0))),
            Stmt::assert(vec![z], at_most(1.0)),
        ],
        "pattern2" => vec![
            call,
            Stmt::if_leq(
                Expr::var(y),
                1.0,
                Stmt::assign(z, Expr::offset(x, 10.0)),
                Stmt::assign(z, Expr::offset(x, -5.0)),
            ),
            Stmt::assert(vec![z], at_most(0.0)),
        ],
        "pattern3" => vec![
            call,
            Stmt::if_leq(
                Expr::var(y),
                1.0,
                Stmt::assign(z, Expr::linear(vec![(y, -1.0)], 10.0)),
                Stmt::assign(z, c(1.0)),
            ),
            Stmt::assert(vec![z], at_most(1.0)),
        ],
        "pattern4" => {
            let sq = p.var("y_sq");
            vec![
                call,
                Stmt::if_leq(
                    Expr::var(y),
                    -1.0,
                    Stmt::assign(z, c(1.0)),
                    Stmt::seq(vec![
                        Stmt::assign(sq, Expr::var(y).then(Nonlinearity::Square)),
                        Stmt::assign(z, Expr::offset(sq, 2.0)),
                    ]),
                ),
                Stmt::assert(vec![z], at_most(1.0)),
            ]
        }
        _ => vec![
            call,
            Stmt::if_leq(Expr::var(y), 1.0, Stmt::assign(z, Expr::var(y)), Stmt::assign(z, c(-10.0))),
            Stmt::assert(vec![z], SafeSet::interval(-5.0, 0.0)),
        ],
    };
    p.body = Stmt::seq(body);
    p
}

fn thermostat(cfg: &BenchmarkConfig) -> Result<Benchmark> {
    let t = &cfg.thermostat;
    if !(t.branches == 2 || t.branches == 3) {
        return Err(Error::Config(format!("thermostat supports 2 or 3 branches, got {}", t.branches)));
    }
    if t.input_scale == 0.0 {
        return Err(Error::Config("thermostat input_scale must be nonzero".into()));
    }
    let n = cfg.loop_length.unwrap_or(20);
    let mut p = Program::new("thermostat");
    let x = p.var("x");
    let mode = p.var("isOn");
    let heat = p.var("heat");
    let xn = p.var("x_net");
    p.add_input(x, 60.0, 64.0);

    let cool = Stmt::assign(x, Expr::linear(vec![(x, 1.0 - t.cool_rate)], t.cool_rate * t.cool_target));
    let warm = Stmt::assign(
        x,
        Expr::linear(
            vec![(x, 1.0 - t.warm_rate), (heat, t.heat_gain)],
            t.warm_rate * t.warm_target,
        ),
    );
    // raw temperature → network input
    let scale = |temp: f64| (temp - t.input_offset) * t.input_scale;
    let to_net = Stmt::assign(xn, Expr::linear(vec![(x, t.input_scale)], -t.input_offset * t.input_scale));
    let safe = SafeSet::interval(t.safe.0, t.safe.1);

    let mut controllers = BTreeMap::new();
    let mut noise = BTreeMap::new();
    let step_on = |b: &ControllerBuilder, out: VarId, thr: f64, below: f64, above: f64| {
        Stmt::if_leq(
            Expr::var(b.input(0)),
            thr,
            Stmt::assign(out, Expr::constant(below)),
            Stmt::assign(out, Expr::constant(above)),
        )
    };

    let branch = if t.branches == 2 {
        p.modules.insert("cool".into(), net(cfg, 1, 1, Activation::Sigmoid));
        p.modules.insert("heat".into(), net(cfg, 1, 2, Activation::Sigmoid));

        let cb = ControllerBuilder::new(&["x"], &["isOn"]);
        let body = step_on(&cb, cb.output(0), scale(t.gt_on_below), 1.0, 0.0);
        controllers.insert("cool".to_string(), cb.build(body));
        noise.insert("cool".to_string(), NoiseSpec::Uniform { half_widths: vec![t.noise] });

        let hb = ControllerBuilder::new(&["x"], &["isOn", "heat"]);
        let body = Stmt::seq(vec![
            step_on(&hb, hb.output(0), scale(t.gt_off_above), 1.0, 0.0),
            Stmt::assign(hb.output(1), Expr::constant(t.gt_heat)),
        ]);
        controllers.insert("heat".to_string(), hb.build(body));
        noise.insert("heat".to_string(), NoiseSpec::Uniform { half_widths: vec![t.noise, t.noise] });

        Stmt::if_leq(
            Expr::var(mode),
            0.5,
            Stmt::seq(vec![Stmt::call("cool", vec![xn], vec![mode]), cool]),
            Stmt::seq(vec![Stmt::call("heat", vec![xn], vec![mode, heat]), warm]),
        )
    } else {
        // mode ∈ {0, 0.5, 1} selects cool / low heat / high heat
        p.modules.insert("cool".into(), net(cfg, 1, 1, Activation::Sigmoid));
        p.modules.insert("low_heat".into(), net(cfg, 1, 2, Activation::Sigmoid));
        p.modules.insert("high_heat".into(), net(cfg, 1, 2, Activation::Sigmoid));

        let cb = ControllerBuilder::new(&["x"], &["isOn"]);
        let body = step_on(&cb, cb.output(0), scale(t.gt_on_below), 0.5, 0.0);
        controllers.insert("cool".to_string(), cb.build(body));

        let lb = ControllerBuilder::new(&["x"], &["isOn", "heat"]);
        let (lx, lm) = (lb.input(0), lb.output(0));
        let body = Stmt::seq(vec![
            Stmt::if_leq(
                Expr::var(lx),
                scale(t.gt_high_below),
                Stmt::assign(lm, Expr::constant(1.0)),
                Stmt::if_leq(
                    Expr::var(lx),
                    scale(t.gt_off_above),
                    Stmt::assign(lm, Expr::constant(0.5)),
                    Stmt::assign(lm, Expr::constant(0.0)),
                ),
            ),
            Stmt::assign(lb.output(1), Expr::constant(t.gt_low_heat)),
        ]);
        controllers.insert("low_heat".to_string(), lb.build(body));

        let hb = ControllerBuilder::new(&["x"], &["isOn", "heat"]);
        let body = Stmt::seq(vec![
            step_on(&hb, hb.output(0), scale(t.gt_high_below + 4.0), 1.0, 0.5),
            Stmt::assign(hb.output(1), Expr::constant(t.gt_high_heat)),
        ]);
        controllers.insert("high_heat".to_string(), hb.build(body));
        for m in ["cool", "low_heat", "high_heat"] {
            let k = if m == "cool" { 1 } else { 2 };
            noise.insert(m.to_string(), NoiseSpec::Uniform { half_widths: vec![t.noise; k] });
        }
        Stmt::if_leq(
            Expr::var(mode),
            0.25,
            Stmt::seq(vec![Stmt::call("cool", vec![xn], vec![mode]), cool]),
            Stmt::if_leq(
                Expr::var(mode),
                0.75,
                Stmt::seq(vec![Stmt::call("low_heat", vec![xn], vec![mode, heat]), warm.clone()]),
                Stmt::seq(vec![Stmt::call("high_heat", vec![xn], vec![mode, heat]), warm]),
            ),
        )
    };

    p.body = Stmt::seq(vec![
        Stmt::assign(mode, Expr::constant(0.0)),
        Stmt::repeat(n, Stmt::seq(vec![to_net, branch, Stmt::assert(vec![x], safe)])),
    ]);
    Ok(Benchmark {
        ground_truth: Some(GroundTruthProgram {
            program: p.clone(),
            controllers,
            noise,
        }),
        program: p,
    })
}

fn aircraft(cfg: &BenchmarkConfig) -> Result<Benchmark> {
    let a = &cfg.ac;
    let n = cfg.loop_length.unwrap_or(15);
    let mut p = Program::new("ac");
    let x1 = p.var("x1");
    let y1 = p.var("y1");
    let x2 = p.var("x2");
    let y2 = p.var("y2");
    let step = p.var("step");
    let stage = p.var("stage");
    let probs: Vec<VarId> = (0..4).map(|k| p.var(&format!("p{k}"))).collect();
    let gap_x = p.var("gap_x2");
    let gap_y = p.var("gap_y2");
    let dist2 = p.var("dist2");
    p.add_input(x1, 12.0, 16.0);
    p.modules.insert("ac".into(), net(cfg, 6, 5, Activation::Sigmoid));

    // CRUISE, LEFT, STRAIGHT, RIGHT
    let lateral = [0.0, a.lateral, 0.0, -a.lateral];
    let bodies: Vec<Stmt> = (0..4)
        .map(|k| {
            let mut s = vec![Stmt::assign(stage, Expr::constant(k as f64))];
            if lateral[k] != 0.0 {
                s.push(Stmt::assign(x1, Expr::offset(x1, lateral[k])));
            }
            s.push(Stmt::assign(y1, Expr::offset(y1, a.speed)));
            Stmt::seq(s)
        })
        .collect();
    let choose = lower_argmax(&mut p, &probs, bodies)?;
    let mut outs = probs.clone();
    outs.push(step);
    let separation = |gx: VarId, gy: VarId, d: VarId| {
        vec![
            Stmt::assign(gx, Expr::diff(x1, x2).then(Nonlinearity::Square)),
            Stmt::assign(gy, Expr::diff(y1, y2).then(Nonlinearity::Square)),
            Stmt::assign(d, Expr::linear(vec![(gx, 1.0), (gy, 1.0)], 0.0)),
        ]
    };
    let mut iter = vec![
        Stmt::call("ac", vec![x1, y1, x2, y2, step, stage], outs),
        choose,
        Stmt::assign(x2, Expr::offset(x2, a.intruder_speed)),
    ];
    iter.extend(separation(gap_x, gap_y, dist2));
    iter.push(Stmt::assert(vec![dist2], SafeSet::single(vec![SafeInterval::at_least(a.safe_dist2)])));
    p.body = Stmt::seq(vec![
        Stmt::assign(y1, Expr::constant(-15.0)),
        Stmt::assign(x2, Expr::constant(0.0)),
        Stmt::assign(y2, Expr::constant(0.0)),
        Stmt::assign(step, Expr::constant(0.0)),
        Stmt::assign(stage, Expr::constant(0.0)),
        Stmt::repeat(n, Stmt::seq(iter)),
    ]);

    // stage machine: CRUISE → LEFT → STRAIGHT → RIGHT → CRUISE
    let mut cb = ControllerBuilder::new(
        &["x1", "y1", "x2", "y2", "step", "stage"],
        &["p0", "p1", "p2", "p3", "step_out"],
    );
    let (cx1, cy1, cx2, cy2, cstep, cstage) =
        (cb.input(0), cb.input(1), cb.input(2), cb.input(3), cb.input(4), cb.input(5));
    let cp: Vec<VarId> = (0..4).map(|k| cb.output(k)).collect();
    let cstep_out = cb.output(4);
    let gx = cb.temp("gap_x2");
    let gy = cb.temp("gap_y2");
    let d = cb.temp("dist2");
    let pick = |k: usize, next_step: Expr| {
        Stmt::seq(vec![Stmt::assign(cp[k], Expr::constant(1.0)), Stmt::assign(cstep_out, next_step)])
    };
    let restart = || Expr::constant(0.0);
    let advance = || Expr::offset(cstep, a.step_unit);
    // stay while the count is below its limit
    let hold = |stay: usize, leave: usize, limit: usize| {
        Stmt::if_leq(
            Expr::var(cstep),
            (limit as f64 - 0.5) * a.step_unit,
            pick(stay, advance()),
            pick(leave, restart()),
        )
    };
    let mut body: Vec<Stmt> = cp.iter().map(|&v| Stmt::assign(v, Expr::constant(0.0))).collect();
    body.push(Stmt::assign(gx, Expr::diff(cx1, cx2).then(Nonlinearity::Square)));
    body.push(Stmt::assign(gy, Expr::diff(cy1, cy2).then(Nonlinearity::Square)));
    body.push(Stmt::assign(d, Expr::linear(vec![(gx, 1.0), (gy, 1.0)], 0.0)));
    body.push(Stmt::if_leq(
        Expr::var(cstage),
        0.5,
        Stmt::if_leq(Expr::var(d), a.trigger_dist2, pick(1, restart()), pick(0, restart())),
        Stmt::if_leq(
            Expr::var(cstage),
            1.5,
            hold(1, 2, a.left_steps),
            Stmt::if_leq(
                Expr::var(cstage),
                2.5,
                hold(2, 3, a.straight_steps),
                hold(3, 0, a.right_steps),
            ),
        ),
    ));
    let mut controllers = BTreeMap::new();
    controllers.insert("ac".to_string(), cb.build(Stmt::seq(body)));
    let mut noise = BTreeMap::new();
    noise.insert("ac".to_string(), NoiseSpec::None);
    Ok(Benchmark {
        ground_truth: Some(GroundTruthProgram {
            program: p.clone(),
            controllers,
            noise,
        }),
        program: p,
    })
}

fn racetrack(cfg: &BenchmarkConfig) -> Result<Benchmark> {
    let r = &cfg.racetrack;
    let n = cfg.loop_length.unwrap_or(20);
    let mut p = Program::new("racetrack");
    let x = p.var("x");
    let x1 = p.var("x1");
    let y1 = p.var("y1");
    let x2 = p.var("x2");
    let y2 = p.var("y2");
    let a1: Vec<VarId> = (0..3).map(|k| p.var(&format!("p1{k}"))).collect();
    let a2: Vec<VarId> = (0..3).map(|k| p.var(&format!("p2{k}"))).collect();
    let gap = p.var("gap");
    p.add_input(x, 5.0, 6.0);
    p.modules.insert("agent1".into(), net(cfg, 2, 3, Activation::Relu));
    p.modules.insert("agent2".into(), net(cfg, 2, 3, Activation::Relu));

    // up, straight, down
    let dx = [1.0, 0.0, -1.0];
    let moves = |v: VarId| -> Vec<Stmt> {
        dx.iter()
            .map(|&d| {
                if d == 0.0 {
                    Stmt::skip()
                } else {
                    Stmt::assign(v, Expr::offset(v, d))
                }
            })
            .collect()
    };
    let m1 = lower_argmax(&mut p, &a1, moves(x1))?;
    let m2 = lower_argmax(&mut p, &a2, moves(x2))?;
    let wall = SafeSet::new(vec![
        vec![SafeInterval::closed(r.lane.0, r.lane.1), SafeInterval::at_most(r.wide_rows.0)],
        vec![
            SafeInterval::closed(r.wide_lane.0, r.wide_lane.1),
            SafeInterval::closed(r.wide_rows.0, r.wide_rows.1),
        ],
        vec![SafeInterval::closed(r.lane.0, r.lane.1), SafeInterval::at_least(r.wide_rows.1)],
    ])?;
    let apart = SafeSet::new(vec![
        vec![SafeInterval::at_most(-r.crash_gap)],
        vec![SafeInterval::at_least(r.crash_gap)],
    ])?;
    p.body = Stmt::seq(vec![
        Stmt::assign(x1, Expr::var(x)),
        Stmt::assign(x2, Expr::var(x)),
        Stmt::assign(y1, Expr::constant(0.0)),
        Stmt::assign(y2, Expr::constant(0.0)),
        Stmt::repeat(
            n,
            Stmt::seq(vec![
                Stmt::call("agent1", vec![x1, y1], a1.clone()),
                Stmt::call("agent2", vec![x2, y2], a2.clone()),
                m1,
                Stmt::assign(y1, Expr::offset(y1, 1.0)),
                m2,
                Stmt::assign(y2, Expr::offset(y2, 1.0)),
                Stmt::assert(vec![x1, y1], wall.clone()),
                Stmt::assert(vec![x2, y2], wall.clone()),
                Stmt::assign(gap, Expr::diff(x1, x2)),
                Stmt::assert(vec![gap], apart),
            ]),
        ),
    ]);

    // keyed on the row, which is exact under the box domain
    let planner = |swerve: usize| {
        let b = ControllerBuilder::new(&["x", "y"], &["p0", "p1", "p2"]);
        let (cy, o) = (b.input(1), [b.output(0), b.output(1), b.output(2)]);
        let one_hot = |k: usize| {
            Stmt::seq(
                (0..3)
                    .map(|j| Stmt::assign(o[j], Expr::constant(if j == k { 1.0 } else { 0.0 })))
                    .collect(),
            )
        };
        b.build(Stmt::if_leq(Expr::var(cy), r.gt_swerve_rows - 0.5, one_hot(swerve), one_hot(1)))
    };
    let mut controllers = BTreeMap::new();
    controllers.insert("agent1".to_string(), planner(0));
    controllers.insert("agent2".to_string(), planner(2));
    let step_noise = NoiseSpec::SafeStep {
        prob: r.noise_prob,
        x_input: 0,
        y_input: 1,
        dx: dx.to_vec(),
        dy: 1.0,
        safe: wall,
    };
    let mut noise = BTreeMap::new();
    noise.insert("agent1".to_string(), step_noise.clone());
    noise.insert("agent2".to_string(), step_noise);
    Ok(Benchmark {
        ground_truth: Some(GroundTruthProgram {
            program: p.clone(),
            controllers,
            noise,
        }),
        program: p,
    })
}

fn cartpole(cfg: &BenchmarkConfig) -> Result<Benchmark> {
    let c = &cfg.cartpole;
    let horizon = cfg.loop_length.unwrap_or(10);
    let (a, b) = c.dynamics();
    let mut p = Program::new("cartpole");
    let names = ["pos", "vel", "angle", "ang_vel"];
    let s: Vec<VarId> = names.iter().map(|n| p.var(n)).collect();
    let next: Vec<VarId> = names.iter().map(|n| p.var(&format!("{n}_next"))).collect();
    let p0 = p.var("p0");
    let p1 = p.var("p1");
    let force = p.var("force");
    for &v in &s {
        p.add_input(v, -c.init_half_width, c.init_half_width);
    }
    p.modules.insert("controller".into(), net(cfg, 4, 2, Activation::Sigmoid));

    let mut iter = vec![
        Stmt::call("controller", s.clone(), vec![p0, p1]),
        Stmt::assign(force, Expr::linear(vec![(p1, c.force_scale), (p0, -c.force_scale)], 0.0)),
    ];
    for i in 0..4 {
        let mut terms: Vec<(VarId, f64)> = (0..4).filter(|&j| a[i][j] != 0.0).map(|j| (s[j], a[i][j])).collect();
        if b[i] != 0.0 {
            terms.push((force, b[i]));
        }
        iter.push(Stmt::assign(next[i], Expr::linear(terms, 0.0)));
    }
    for i in 0..4 {
        iter.push(Stmt::assign(s[i], Expr::var(next[i])));
    }
    iter.push(match c.safety {
        CartpoleSafety::Position => Stmt::assert(vec![s[0]], SafeSet::interval(-c.position_bound, c.position_bound)),
        CartpoleSafety::Angle => Stmt::assert(vec![s[2]], SafeSet::interval(-c.angle_bound, c.angle_bound)),
    });
    p.body = Stmt::repeat(horizon, Stmt::seq(iter));

    // p1 − p0 = u/force_scale with u = −K·s, each clamped to [0, 1]
    let mut eb = ControllerBuilder::new(&names, &["p0", "p1"]);
    let half = 0.5 / c.force_scale;
    let lin = |sign: f64| {
        Expr::linear(
            (0..4).map(|j| (eb.input(j), -sign * half * c.expert_gain[j])).collect(),
            0.5,
        )
    };
    let (up, down) = (lin(1.0), lin(-1.0));
    let t1 = eb.temp("hi");
    let t0 = eb.temp("lo");
    let (o0, o1) = (eb.output(0), eb.output(1));
    let body = Stmt::seq(vec![
        Stmt::assign(t1, up.then(Nonlinearity::MaxConst(0.0))),
        Stmt::assign(o1, Expr::var(t1).then(Nonlinearity::MinConst(1.0))),
        Stmt::assign(t0, down.then(Nonlinearity::MaxConst(0.0))),
        Stmt::assign(o0, Expr::var(t0).then(Nonlinearity::MinConst(1.0))),
    ]);
    let mut controllers = BTreeMap::new();
    controllers.insert("controller".to_string(), eb.build(body));
    let mut noise = BTreeMap::new();
    noise.insert("controller".to_string(), NoiseSpec::None);
    Ok(Benchmark {
        ground_truth: Some(GroundTruthProgram {
            program: p.clone(),
            controllers,
            noise,
        }),
        program: p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::well_formed;

    #[test]
    fn every_benchmark_is_well_formed() {
        let cfg = BenchmarkConfig::default();
        for name in BENCHMARKS {
            let b = build_benchmark(name, &cfg).unwrap();
            assert!(well_formed(&b.program).is_empty(), "{name}: {:?}", well_formed(&b.program));
            if let Some(gt) = &b.ground_truth {
                let inl = gt.inlined().unwrap();
                assert!(well_formed(&inl).is_empty(), "{name} ground truth: {:?}", well_formed(&inl));
            }
        }
        let mut three = cfg.clone();
        three.thermostat.branches = 3;
        assert!(well_formed(&build_benchmark("thermostat", &three).unwrap().program).is_empty());
    }

    #[test]
    fn unknown_benchmark() {
        assert!(matches!(
            build_benchmark("nope", &BenchmarkConfig::default()),
            Err(Error::UnknownBenchmark(_))
        ));
    }

    #[test]
    fn pattern1_shape() {
        let p = build_benchmark("pattern1", &BenchmarkConfig::default()).unwrap().program;
        assert_eq!(p.inputs.len(), 1);
        assert_eq!(p.inputs[0].interval, Interval::new(-5.0, 5.0));
        let asserts = p.body.count_nodes(&|s| matches!(s, Stmt::Assert { .. }));
        assert_eq!(asserts, 1);
        let Stmt::Seq { body } = &p.body else { panic!() };
        let Stmt::Assert { safe, .. } = body.last().unwrap() else { panic!() };
        assert_eq!(safe.boxes, vec![vec![SafeInterval::at_most(1.0)]]);
    }

    #[test]
    fn thermostat_shape() {
        let p = build_benchmark("thermostat", &BenchmarkConfig::default()).unwrap().program;
        let Stmt::Seq { body } = &p.body else { panic!() };
        let Stmt::Repeat { count, body: inner } = &body[1] else { panic!() };
        assert_eq!(*count, 20);
        let Stmt::Seq { body: inner } = inner.as_ref() else { panic!() };
        let Stmt::Assert { safe, .. } = inner.last().unwrap() else { panic!() };
        assert_eq!(*safe, SafeSet::interval(55.0, 83.0));
    }

    #[test]
    fn config_rejects_unknown_fields() {
        assert!(serde_json::from_str::<BenchmarkConfig>(r#"{"hiden": [3]}"#).is_err());
        let c: BenchmarkConfig = serde_json::from_str(r#"{"hidden": [3], "loop_length": 40}"#).unwrap();
        assert_eq!(c.loop_length, Some(40));
        assert_eq!(c.thermostat, ThermostatConfig::default());
    }
}
