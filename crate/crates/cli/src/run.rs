//! One experiment: run a dynamics, evaluate its certified policy at the
//! checkpoints and emit CSV rows.

use std::fmt;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use markov_oftrl::cce::{run_cce_smooth, run_cce_stage, StageConfig, StageEta, StageRun};
use markov_oftrl::ce::{run_ce, theory_eta, SmoothConfig, SmoothRun};
use markov_oftrl::eval::{
    evaluate, stage_regret_max, swap_regret_series, Certification, EquilibriumKind, EvalOptions,
    Evaluator, GapReport,
};
use markov_oftrl::game::toy_game;
use markov_oftrl::MarkovGame;

use crate::gamefile::read_game;

pub const CSV_HEADER: [&str; 8] = [
    "algo",
    "game",
    "eta_mode",
    "eta",
    "T_checkpoint",
    "player",
    "metric",
    "value",
];

/// Written in the value column when an enumeration guard tripped.
pub const GUARD_MARKER: &str = "guard";

/// Default constant for the stage-wise theory learning rate.
pub const STAGE_THEORY_C: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub enum GameSource {
    Toy,
    File(PathBuf),
}

impl GameSource {
    pub fn parse(s: &str) -> Self {
        if s == "toy" {
            GameSource::Toy
        } else {
            GameSource::File(PathBuf::from(s))
        }
    }

    pub fn load(&self) -> Result<MarkovGame> {
        match self {
            GameSource::Toy => Ok(toy_game()),
            GameSource::File(path) => {
                read_game(path).with_context(|| format!("loading {}", path.display()))
            }
        }
    }
}

impl fmt::Display for GameSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GameSource::Toy => f.write_str("toy"),
            GameSource::File(path) => write!(f, "{}", path.display()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
#[clap(rename_all = "snake_case")]
pub enum Algo {
    /// BM-OFTRL with smooth value updates (CE)
    CeSmooth,
    /// Stage-based optimistic Hedge (CCE)
    CceStage,
    /// Smooth optimistic Hedge (CCE)
    CceSmooth,
}

impl Algo {
    pub const ALL: [Algo; 3] = [Algo::CeSmooth, Algo::CceStage, Algo::CceSmooth];

    pub fn kind(self) -> EquilibriumKind {
        match self {
            Algo::CeSmooth => EquilibriumKind::Ce,
            Algo::CceStage | Algo::CceSmooth => EquilibriumKind::Cce,
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algo::CeSmooth => "ce_smooth",
            Algo::CceStage => "cce_stage",
            Algo::CceSmooth => "cce_smooth",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaMode {
    Constant(f64),
    Theory,
}

impl std::str::FromStr for EtaMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "theory" {
            return Ok(EtaMode::Theory);
        }
        match s.parse::<f64>() {
            Ok(eta) if eta > 0.0 && eta.is_finite() => Ok(EtaMode::Constant(eta)),
            _ => Err(format!("expected a positive number or `theory`, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub game: GameSource,
    pub algo: Algo,
    pub iterations: usize,
    pub eta: EtaMode,
    pub checkpoints: Vec<usize>,
    pub out: Option<PathBuf>,
    pub diagnostics: bool,
}

/// Powers of two up to `t`, followed by `t` itself.
pub fn default_checkpoints(t: usize) -> Vec<usize> {
    let mut out: Vec<usize> = std::iter::successors(Some(1usize), |&c| c.checked_mul(2))
        .take_while(|&c| c <= t)
        .collect();
    if out.last() != Some(&t) {
        out.push(t);
    }
    out
}

impl RunConfig {
    pub fn new(game: GameSource, algo: Algo, iterations: usize, eta: EtaMode) -> Self {
        Self {
            game,
            algo,
            iterations,
            eta,
            checkpoints: default_checkpoints(iterations),
            out: None,
            diagnostics: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            bail!("T must be at least 1");
        }
        if self.checkpoints.is_empty() {
            bail!("at least one checkpoint is required");
        }
        if self.checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            bail!("checkpoints must be strictly increasing");
        }
        if self.checkpoints[0] == 0 || *self.checkpoints.last().unwrap() > self.iterations {
            bail!("checkpoints must lie in [1, {}]", self.iterations);
        }
        if let EtaMode::Constant(eta) = self.eta {
            if !(eta > 0.0 && eta.is_finite()) {
                bail!("learning rate must be positive and finite");
            }
        }
        Ok(())
    }
}

enum Dynamics {
    Smooth(SmoothRun),
    Stage(StageRun),
}

/// Result of one experiment.
pub struct Outcome {
    pub config: RunConfig,
    /// Numeric learning rate written to the CSV; for the stage-wise theory
    /// rate this is the constant `c`.
    pub eta_value: f64,
    pub reports: Vec<GapReport>,
    /// Stage end iterations for the stage-based dynamics.
    pub stage_ends: Vec<usize>,
}

pub fn execute(config: &RunConfig) -> Result<Outcome> {
    config.validate()?;
    let game = config.game.load()?;
    execute_on(config, &game)
}

pub fn execute_on(config: &RunConfig, game: &MarkovGame) -> Result<Outcome> {
    config.validate()?;
    let t = config.iterations;
    let (dynamics, eta_value) = match config.algo {
        Algo::CeSmooth | Algo::CceSmooth => {
            let eta = match config.eta {
                EtaMode::Constant(eta) => eta,
                EtaMode::Theory => theory_eta(game),
            };
            let mut cfg = SmoothConfig::new(t, eta);
            cfg.checkpoints = config.checkpoints.clone();
            cfg.record_utilities = config.diagnostics;
            let run = if config.algo == Algo::CeSmooth {
                run_ce(game, &cfg)?
            } else {
                run_cce_smooth(game, &cfg)?
            };
            (Dynamics::Smooth(run), eta)
        }
        Algo::CceStage => {
            let (eta, value) = match config.eta {
                EtaMode::Constant(eta) => (StageEta::Constant(eta), eta),
                EtaMode::Theory => (StageEta::Theory { c: STAGE_THEORY_C }, STAGE_THEORY_C),
            };
            let run = run_cce_stage(game, &StageConfig { iterations: t, eta })?;
            (Dynamics::Stage(run), value)
        }
    };

    let last = *config.checkpoints.last().unwrap();
    let options = EvalOptions::new(config.algo.kind());
    let (mut reports, stage_ends) = match &dynamics {
        Dynamics::Smooth(run) => {
            let ev = Evaluator::new(game, &run.trajectory, Certification::Smooth, last)?;
            (evaluate(&ev, options, &config.checkpoints)?, Vec::new())
        }
        Dynamics::Stage(run) => {
            let ev = Evaluator::new(game, &run.trajectory, Certification::Staged(&run.schedule), last)?;
            let ends = run.schedule.stages().iter().map(|s| s.end).collect();
            (evaluate(&ev, options, &config.checkpoints)?, ends)
        }
    };

    if config.diagnostics {
        for i in 0..game.num_players() {
            match &dynamics {
                Dynamics::Smooth(run) => {
                    let series = swap_regret_series(
                        game,
                        &run.trajectory,
                        run.utilities.as_ref(),
                        i,
                        &config.checkpoints,
                    )?;
                    for (report, r) in reports.iter_mut().zip(series) {
                        report.players[i].swap_regret = Some(r);
                    }
                }
                Dynamics::Stage(run) => {
                    for report in reports.iter_mut() {
                        // Latest stage that completed by this checkpoint.
                        let stage = run
                            .schedule
                            .stages()
                            .iter()
                            .rev()
                            .find(|s| s.is_complete() && s.end <= report.checkpoint);
                        if let Some(stage) = stage {
                            let q = run.q_for_stage(stage.index);
                            let r = stage_regret_max(game, &run.trajectory, &run.schedule, q, stage.index, i)?;
                            report.players[i].stage_regret = Some(r);
                        }
                    }
                }
            }
        }
    }

    Ok(Outcome {
        config: config.clone(),
        eta_value,
        reports,
        stage_ends,
    })
}

impl Outcome {
    pub fn eta_mode(&self) -> &'static str {
        match self.config.eta {
            EtaMode::Constant(_) => "constant",
            EtaMode::Theory => "theory",
        }
    }

    /// Every CSV data row, in output order.
    pub fn rows(&self) -> Vec<[String; 8]> {
        let algo = self.config.algo.to_string();
        let game = self.config.game.to_string();
        let eta_mode = self.eta_mode().to_string();
        let eta = self.eta_value.to_string();
        let kind = self.config.algo.kind();
        let mut rows = Vec::new();
        for report in &self.reports {
            let t = report.checkpoint;
            let mut push = |player: String, metric: &str, value: String| {
                rows.push([
                    algo.clone(),
                    game.clone(),
                    eta_mode.clone(),
                    eta.clone(),
                    t.to_string(),
                    player,
                    metric.to_string(),
                    value,
                ]);
            };
            let guarded = |v: Option<f64>| v.map_or(GUARD_MARKER.to_string(), |v| v.to_string());
            for (i, p) in report.players.iter().enumerate() {
                let player = (i + 1).to_string();
                push(player.clone(), "value_certified", p.value.to_string());
                if kind == EquilibriumKind::Ce {
                    push(player.clone(), "gap_exact", guarded(p.exact));
                }
                push(player.clone(), "gap_upper", p.upper.to_string());
                push(player.clone(), "gap_lower", guarded(p.lower));
                let reported = p.reported(kind);
                push(player.clone(), "gap_reported", reported.to_string());
                push(player.clone(), "gap_times_T", (reported * t as f64).to_string());
                if let Some(r) = p.swap_regret {
                    push(player.clone(), "swapreg_max", r.to_string());
                }
                if let Some(r) = p.stage_regret {
                    push(player.clone(), "stagereg_max", r.to_string());
                }
            }
            let max = "max".to_string();
            if kind == EquilibriumKind::Ce {
                push(max.clone(), "gap_exact", guarded(report.max_exact()));
            }
            push(max.clone(), "gap_upper", report.max_upper().to_string());
            push(max.clone(), "gap_lower", guarded(report.max_lower()));
            let reported = report.reported();
            push(max.clone(), "gap_reported", reported.to_string());
            push(max.clone(), "gap_times_T", (reported * t as f64).to_string());
            if let Some(r) = report.max_swap_regret() {
                push(max.clone(), "swapreg_max", r.to_string());
            }
            if let Some(r) = report.max_stage_regret() {
                push(max, "stagereg_max", r.to_string());
            }
        }
        rows
    }

    pub fn write_csv<W: Write>(&self, out: W, header: bool) -> Result<()> {
        let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        if header {
            writer.write_record(CSV_HEADER)?;
        }
        for row in self.rows() {
            writer.write_record(&row)?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf, true)?;
        Ok(String::from_utf8(buf)?)
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "{} on {}: T={}, eta={} ({})\n",
            self.config.algo,
            self.config.game,
            self.config.iterations,
            self.eta_value,
            self.eta_mode()
        );
        if !self.stage_ends.is_empty() {
            let ends: Vec<String> = self.stage_ends.iter().map(ToString::to_string).collect();
            s.push_str(&format!("stage ends: {}\n", ends.join(", ")));
        }
        if let Some(last) = self.reports.last() {
            let gap = last.reported();
            s.push_str(&format!(
                "T={}: reported gap {gap:.6e}, gap*T {:.4}, upper {:.6e}",
                last.checkpoint,
                gap * last.checkpoint as f64,
                last.max_upper()
            ));
            if let Some(lower) = last.max_lower() {
                s.push_str(&format!(", lower {lower:.6e}"));
            }
            s.push('\n');
        }
        s
    }
}
