use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use got_core::budget::system_report;
use got_core::config::TrackerConfig;
use got_core::eval::{
    evaluate, format_log, load_sequence, max_gm, read_boxes, read_log, read_presence, run_ope, tpr_tnr,
    ABSENT_THRESHOLD,
};
use got_core::geometry::BoundingBox;
use got_core::image::Image;
use got_core::synth::{generate, write_sequence, SynthKind};
use got_core::{Error, Result};

#[derive(Parser)]
#[command(name = "got", version, about = "Green object tracker")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Track a sequence from its first ground-truth box and write a prediction log
    Track {
        /// Sequence directory (img/ plus groundtruth_rect.txt)
        #[arg(long)]
        seq: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// key = value settings overriding the defaults
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Score a prediction log against ground truth
    Eval {
        #[arg(long)]
        preds: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// One 0/1 per frame; enables TPR/TNR/MaxGM
        #[arg(long)]
        presence: Option<PathBuf>,
    },
    /// Print the parameter and flop budget
    Budget {
        /// Print key = value lines instead of the table
        #[arg(long)]
        raw: bool,
    },
    /// Draw predicted boxes onto the sequence frames
    Render {
        #[arg(long)]
        seq: PathBuf,
        #[arg(long)]
        preds: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a labelled synthetic sequence
    Synth {
        /// static, translate, deform or occlude
        #[arg(long)]
        kind: SynthKind,
        #[arg(long, default_value_t = 100)]
        frames: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

const PRED_COLOR: [f64; 3] = [40.0, 230.0, 60.0];
const GT_COLOR: [f64; 3] = [240.0, 40.0, 40.0];

fn draw_box(img: &mut Image<f64>, b: &BoundingBox<f64>, color: [f64; 3]) {
    let (w, h) = (img.width() as isize, img.height() as isize);
    let x0 = b.x.round() as isize;
    let y0 = b.y.round() as isize;
    let x1 = b.right().round() as isize - 1;
    let y1 = b.bottom().round() as isize - 1;
    let mut put = |x: isize, y: isize| {
        if x >= 0 && y >= 0 && x < w && y < h {
            for (c, v) in color.iter().enumerate().take(img.channels()) {
                img.set(x as usize, y as usize, c, *v);
            }
        }
    };
    for t in 0..2 {
        for x in x0..=x1 {
            put(x, y0 + t);
            put(x, y1 - t);
        }
        for y in y0..=y1 {
            put(x0 + t, y);
            put(x1 - t, y);
        }
    }
}

fn track(seq: &Path, out: &Path, config: Option<&Path>) -> Result<()> {
    let cfg = match config {
        Some(p) => TrackerConfig::load(p)?,
        None => TrackerConfig::default(),
    };
    let ds = load_sequence(seq)?;
    let preds = run_ope(&ds, &cfg)?;
    fs::write(out, format_log(&preds))?;
    println!("tracked {} frames of {} -> {}", preds.len(), ds.name, out.display());
    Ok(())
}

fn eval(preds: &Path, gt: &Path, presence: Option<&Path>) -> Result<()> {
    let log = read_log(preds)?;
    let gts = read_boxes(gt)?;
    let boxes: Vec<_> = log.iter().map(|p| p.bbox).collect();
    let m = evaluate(&boxes, &gts)?;
    println!("frames {}", boxes.len());
    println!("DP  {:.4}", m.dp);
    println!("AUC {:.4}", m.auc);
    if let Some(p) = presence {
        let pres = read_presence(p)?;
        let (tpr, tnr) = tpr_tnr(&log, &gts, &pres, ABSENT_THRESHOLD)?;
        println!("TPR   {tpr:.4}");
        println!("TNR   {tnr:.4}");
        println!("MaxGM {:.4}", max_gm(tpr, tnr));
    }
    Ok(())
}

fn render(seq: &Path, preds: &Path, out: &Path) -> Result<()> {
    let ds = load_sequence(seq)?;
    let log = read_log(preds)?;
    if log.len() != ds.len() {
        return Err(Error::LengthMismatch {
            left: log.len(),
            right: ds.len(),
        });
    }
    fs::create_dir_all(out)?;
    let gt = ds.full_gt();
    for (i, (path, p)) in ds.frames.iter().zip(&log).enumerate() {
        let mut img = Image::<f64>::open(path)?;
        if let Some(g) = gt {
            draw_box(&mut img, &g[i], GT_COLOR);
        }
        draw_box(&mut img, &p.bbox, PRED_COLOR);
        img.save_png(out.join(format!("{:04}.png", i + 1)))?;
    }
    println!("wrote {} frames to {}", log.len(), out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Track { seq, out, config } => track(&seq, &out, config.as_deref()),
        Command::Eval { preds, gt, presence } => eval(&preds, &gt, presence.as_deref()),
        Command::Budget { raw } => {
            let r = system_report();
            print!("{}", if raw { r.to_key_values() } else { r.to_table() });
            Ok(())
        }
        Command::Render { seq, preds, out } => render(&seq, &preds, &out),
        Command::Synth { kind, frames, out, seed } => {
            let s = generate(kind, frames, seed);
            write_sequence(&s, &out)?;
            println!("wrote {frames} {kind} frames to {}", out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
