use std::cell::RefCell;
use std::fmt::Write as _;
use std::io::Write;
use std::rc::Rc;

use bstsim::algorithms::{Balanced, MoveToRoot, Splay};
use bstsim::bst_vm::parse_shape;
use bstsim::combiner::{multi_tree, CombinerConfig, OneTree};
use bstsim::multifinger::MfToBst;
use bstsim::proto::{drive, Algorithm, RunReport, Shared};
use bstsim::workload::Workload;
use bstsim::{RefMachine, TreeArena, TreeShape};
use rayon::prelude::*;

use crate::{Check, Failure, RunArgs};

const HEADER: [&str; 8] = ["algo", "workload", "n", "m", "seed", "total_ops", "ops_per_access", "peak_aug_bits"];
const DEFAULT_N: usize = 1024;
const AUG_WORDS_PER_LEVEL: usize = 8;
const CELL_WORDS: usize = 4;

#[derive(Clone, Copy, Debug)]
struct Tuning {
    cfg: CombinerConfig,
    /// Aug words per node; scales with the combiner depth when unset.
    b: Option<usize>,
}

fn tuning(pairs: &[String]) -> Result<Tuning, Failure> {
    let mut t = Tuning { cfg: CombinerConfig { w: Some(CELL_WORDS), ..CombinerConfig::default() }, b: None };
    for pair in pairs {
        let (k, v) = pair.split_once('=').ok_or_else(|| Failure::usage(format!("--config expects K=V, got `{pair}`")))?;
        let v: usize = v.trim().parse().map_err(|_| Failure::usage(format!("--config {k}: `{v}` is not a number")))?;
        match k.trim() {
            "d1" if v >= 1 => t.cfg.d1 = v,
            "C" | "c" if v > 2 => t.cfg.c = v,
            "B" | "b" if v >= 1 => t.b = Some(v),
            "W" | "w" if v >= 1 => t.cfg.w = Some(v),
            "d1" | "C" | "c" | "B" | "b" | "W" | "w" => return Err(Failure::usage(format!("--config {k}={v} is out of range"))),
            other => return Err(Failure::usage(format!("unknown --config key `{other}` (expected d1, C, B, W)"))),
        }
    }
    Ok(t)
}

/// A parsed algorithm name; built afresh on each worker.
#[derive(Clone, Debug)]
struct AlgoSpec {
    leaves: Vec<String>,
}

impl AlgoSpec {
    fn parse(name: &str) -> Result<AlgoSpec, Failure> {
        let leaves: Vec<String> = match name.strip_prefix("combine:") {
            Some(rest) => rest.split('+').map(str::to_string).collect(),
            None => vec![name.to_string()],
        };
        if name.starts_with("combine:") && leaves.len() < 2 {
            return Err(Failure::usage(format!("`{name}` combines fewer than two algorithms")));
        }
        for leaf in &leaves {
            leaf_algorithm(leaf)?;
        }
        Ok(AlgoSpec { leaves })
    }

    fn depth(&self) -> usize {
        let mut k = self.leaves.len();
        let mut d = 0;
        while k > 1 {
            k = k.div_ceil(2);
            d += 1;
        }
        d
    }

    fn build(&self, cfg: CombinerConfig) -> (Rc<dyn Algorithm>, Option<OneTree>) {
        let algs: Vec<Rc<dyn Algorithm>> = self.leaves.iter().map(|l| leaf_algorithm(l).expect("validated")).collect();
        if algs.len() == 1 {
            return (algs[0].clone(), None);
        }
        let c = multi_tree(&algs, cfg).expect("at least two inputs");
        (Rc::new(c.clone()), Some(c))
    }
}

fn leaf_algorithm(name: &str) -> Result<Rc<dyn Algorithm>, Failure> {
    match name {
        "splay" => Ok(Rc::new(Splay)),
        "mtr" | "move-to-root" => Ok(Rc::new(MoveToRoot)),
        "balanced" => Ok(Rc::new(Balanced)),
        other => Err(Failure::usage(format!("unknown algorithm `{other}` (expected splay, mtr, balanced, combine:A+B[+C...])"))),
    }
}

struct Job {
    algo: AlgoSpec,
    workload: Workload,
    n: usize,
    seed: u64,
}

struct Row {
    fields: [String; 8],
    dump: Option<String>,
}

enum Machine {
    Plain(Rc<RefCell<RefMachine>>),
    Simulated(Rc<RefCell<MfToBst>>),
}

impl Machine {
    fn new(tree: TreeArena, fingers: usize, words: usize) -> Machine {
        if fingers == 1 {
            let mut m = RefMachine::new(tree, 1);
            m.set_aug_words(words);
            Machine::Plain(Rc::new(RefCell::new(m)))
        } else {
            let mut m = MfToBst::new(tree, fingers);
            m.set_aug_words(words);
            Machine::Simulated(Rc::new(RefCell::new(m)))
        }
    }

    fn shared(&self) -> Shared {
        match self {
            Machine::Plain(m) => m.clone(),
            Machine::Simulated(m) => m.clone(),
        }
    }

    fn check(&self) -> Result<(), String> {
        match self {
            Machine::Plain(m) => m.borrow().tree().check_invariants(),
            Machine::Simulated(m) => m.borrow().check_invariants(),
        }
    }

    /// Buffer cells of every node in key order.
    fn dump_cells(&self, out: &mut String) {
        let dump = |t: &TreeArena, out: &mut String| {
            for h in t.in_order() {
                let slots: Vec<String> = t.aug_at(h).slots().into_iter().filter(|s| s.0 >= 0x100).map(|(tag, w, v)| format!("{tag:#x}:{v}/{w}")).collect();
                if !slots.is_empty() {
                    let _ = writeln!(out, "  key {}: {}", t.key(h), slots.join(" "));
                }
            }
        };
        match self {
            Machine::Plain(m) => dump(m.borrow().tree(), out),
            Machine::Simulated(m) => dump(m.borrow().physical(), out),
        }
    }
}

fn initial_tree(args: &RunArgs) -> Result<Option<TreeShape>, Failure> {
    let Some(path) = &args.initial_tree else { return Ok(None) };
    let text = std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))?;
    let (shape, keys) = parse_shape(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    if !keys.iter().copied().eq(1..=keys.len() as u64) {
        return Err(Failure::usage(format!("{}: keys must be 1..={}", path.display(), keys.len())));
    }
    Ok(Some(shape))
}

fn execute(job: &Job, shape: &Option<TreeShape>, m: Option<usize>, t: Tuning, check: Check, dump: bool) -> Result<Row, Failure> {
    let n = job.n;
    let input = job.workload.generate(n, m.unwrap_or(10 * n), job.seed).map_err(|e| Failure::usage(e.to_string()))?;
    let (alg, combiner) = job.algo.build(t.cfg);
    let words = t.b.unwrap_or(AUG_WORDS_PER_LEVEL * job.algo.depth().max(1));
    let tree = TreeArena::with_shape(shape.as_ref().unwrap_or(&TreeShape::balanced(n)));
    let machine = Machine::new(tree, alg.fingers(), words);
    let mut every = |_: &dyn bstsim::MfMachine| if check == Check::EveryOp { machine.check() } else { Ok(()) };
    let context = || format!("{} on {} n={n} seed={}", alg.name(), job.workload, job.seed);
    let report: RunReport = drive(machine.shared(), &*alg, &input, &mut every).map_err(|e| Failure::violation(format!("{}: {e}", context())))?;
    if check != Check::Off {
        machine.check().map_err(|e| Failure::violation(format!("{}: final check: {e}", context())))?;
    }
    let dump = dump.then(|| {
        let mut out = format!("# {}\n", context());
        if let Some(c) = &combiner {
            let stats = c.stats();
            let s = stats.borrow();
            let _ = writeln!(out, "  phase I rounds restored: {:?}", s.phase1_restored);
            for r in &s.phase2 {
                let _ = writeln!(out, "  phase II structure {} restarted={} completed={}", r.mu, r.restarted, r.completed.len());
            }
        }
        machine.dump_cells(&mut out);
        out
    });
    Ok(Row {
        fields: [
            alg.name(),
            job.workload.to_string(),
            n.to_string(),
            input.len().to_string(),
            job.seed.to_string(),
            report.total_ops.to_string(),
            format!("{:.4}", report.ops_per_access()),
            report.peak_aug_bits.to_string(),
        ],
        dump,
    })
}

pub fn run(mut args: RunArgs) -> Result<(), Failure> {
    let mut positional = Vec::new();
    for w in std::mem::take(&mut args.words) {
        let num = |v: &str| v.parse::<u64>().map_err(|_| Failure::usage(format!("`{w}`: not a number")));
        match w.split_once('=') {
            Some(("n", v)) => args.n.push(num(v)? as usize),
            Some(("m", v)) => args.m = Some(num(v)? as usize),
            Some(("seed", v)) => args.seed.push(num(v)?),
            _ => positional.push(w),
        }
    }
    let mut positional = positional.into_iter();
    args.algo.extend(positional.next());
    args.workload.extend(positional.next());
    if let Some(extra) = positional.next() {
        return Err(Failure::usage(format!("unexpected argument `{extra}`")));
    }
    if args.algo.is_empty() {
        return Err(Failure::usage("no algorithm given"));
    }
    if args.workload.is_empty() {
        args.workload.push("uniform".into());
    }
    if args.seed.is_empty() {
        args.seed.push(0);
    }
    let shape = initial_tree(&args)?;
    if let Some(s) = &shape {
        let size = s.size();
        if args.n.iter().any(|&n| n != size) {
            return Err(Failure::usage(format!("--n disagrees with the initial tree ({size} keys)")));
        }
        args.n = vec![size];
    }
    if args.n.is_empty() {
        args.n.push(DEFAULT_N);
    }
    if args.n.contains(&0) {
        return Err(Failure::usage("n must be positive"));
    }
    let t = tuning(&args.config)?;
    let algos = args.algo.iter().map(|a| AlgoSpec::parse(a)).collect::<Result<Vec<_>, _>>()?;
    let workloads = args.workload.iter().map(|w| w.parse::<Workload>().map_err(|e| Failure::usage(e.to_string()))).collect::<Result<Vec<_>, _>>()?;

    let mut jobs = Vec::new();
    for algo in &algos {
        for workload in &workloads {
            for &n in &args.n {
                for &seed in &args.seed {
                    jobs.push(Job { algo: algo.clone(), workload: workload.clone(), n, seed });
                }
            }
        }
    }
    let results: Vec<Result<Row, Failure>> =
        jobs.par_iter().map(|j| execute(j, &shape, args.m, t, args.check_invariants, args.dump_buffers)).collect();

    let mut rows = Vec::new();
    let mut first_failure = None;
    for r in results {
        match r {
            Ok(row) => rows.push(row),
            Err(f) => {
                eprintln!("error: {}", f.msg);
                if first_failure.as_ref().is_none_or(|g: &Failure| f.code > g.code) {
                    first_failure = Some(f);
                }
            }
        }
    }
    for row in &rows {
        if let Some(d) = &row.dump {
            eprint!("{d}");
        }
    }
    write_csv(&args, &rows)?;
    match first_failure {
        None => Ok(()),
        Some(f) => Err(Failure { code: f.code, msg: "some runs failed".into() }),
    }
}

fn write_csv(args: &RunArgs, rows: &[Row]) -> Result<(), Failure> {
    let io = |e: std::io::Error| Failure::usage(format!("cannot write CSV: {e}"));
    let sink: Box<dyn Write> = match &args.csv {
        Some(p) => Box::new(std::fs::File::create(p).map_err(io)?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    let csv_err = |e: csv::Error| Failure::usage(format!("cannot write CSV: {e}"));
    w.write_record(HEADER).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row.fields).map_err(csv_err)?;
    }
    w.flush().map_err(io)
}
