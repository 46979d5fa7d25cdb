//! Conformance suites. Each suite checks one property of the library against
//! an independent oracle and reports pass or fail with a short detail line.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::str::FromStr;
use std::time::{Duration, Instant};

use choreo_core::protocols::gmw::{circuits_up_to_depth, eval_circuit, input_assignments, ot2, parse_inputs, Gmw};
use choreo_core::protocols::kvs::{parse_script, reference_responses, Kvs, KvsVariant, Request, DESYNC};
use choreo_core::protocols::lottery::{commitments_precede_openings, expected_omega, Lottery, Tamper, TamperTarget};
use choreo_core::protocols::ProtocolError;
use choreo_core::protocols::field::FieldElement;
use choreo_core::transport::AddressBook;
use choreo_core::{census_of, ChoreoError, FnChoreography, Location, Portable, RunReport, SimError, Value, DEFAULT_STEP_BUDGET};

use crate::config::address_book_json;
use crate::examples::{parse_circuit, Example};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Economy,
    ErrorPath,
    Poly,
    Gmw,
    Ot,
    Lottery,
    Deadlock,
    Oracle,
    Agreement,
    Transport,
    Negative,
}

impl Suite {
    /// Everything a default run covers. The negative control is separate.
    pub const DEFAULT: [Suite; 10] = [
        Suite::Economy,
        Suite::ErrorPath,
        Suite::Poly,
        Suite::Gmw,
        Suite::Ot,
        Suite::Lottery,
        Suite::Deadlock,
        Suite::Oracle,
        Suite::Transport,
        Suite::Agreement,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Economy => "economy",
            Suite::ErrorPath => "error-path",
            Suite::Poly => "poly",
            Suite::Gmw => "gmw",
            Suite::Ot => "ot",
            Suite::Lottery => "lottery",
            Suite::Deadlock => "deadlock",
            Suite::Oracle => "oracle",
            Suite::Agreement => "agreement",
            Suite::Transport => "transport",
            Suite::Negative => "negative",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Suite::DEFAULT
            .into_iter()
            .chain([Suite::Negative])
            .find(|x| x.name() == s)
            .ok_or_else(|| format!("unknown suite `{s}`"))
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub suite: Suite,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {} {} ({:.2?})", self.suite, self.detail, self.elapsed)
    }
}

/// Knobs for a conformance run.
#[derive(Debug, Clone)]
pub struct Settings {
    /// Overrides each suite's default seed count.
    pub seeds: Option<u64>,
    /// GMW party counts.
    pub parties: Vec<usize>,
    /// GMW maximum circuit depth.
    pub depth: usize,
    /// The `choreo` binary, needed by the transport suite.
    pub exe: Option<std::path::PathBuf>,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            seeds: None,
            parties: vec![2, 3],
            depth: 3,
            exe: None,
        }
    }
}

/// Shared state across suites: every report seen is checked for agreement.
#[derive(Debug, Default)]
pub struct Runner {
    pub settings: Settings,
    reports: usize,
    owned_values: usize,
    disagreements: Vec<String>,
}

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

impl Runner {
    pub fn new(settings: Settings) -> Self {
        Runner {
            settings,
            ..Default::default()
        }
    }

    pub fn run(&mut self, suite: Suite) -> Outcome {
        let start = Instant::now();
        let result = match suite {
            Suite::Economy => self.economy(),
            Suite::ErrorPath => self.error_path(),
            Suite::Poly => self.poly(),
            Suite::Gmw => self.gmw(),
            Suite::Ot => self.ot(),
            Suite::Lottery => self.lottery(),
            Suite::Deadlock => self.deadlock(),
            Suite::Oracle => self.oracle(),
            Suite::Agreement => self.agreement(),
            Suite::Transport => self.transport(),
            Suite::Negative => self.negative(),
        };
        let (passed, detail) = match result {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        Outcome {
            suite,
            passed,
            detail,
            elapsed: start.elapsed(),
        }
    }

    fn seeds(&self, default: u64) -> u64 {
        self.settings.seeds.unwrap_or(default)
    }

    /// Records a finished report for the agreement suite.
    fn observe(&mut self, r: &RunReport) {
        self.reports += 1;
        match r.check_agreement() {
            Ok(n) => self.owned_values += n,
            Err(e) => self.disagreements.push(e),
        }
        if let Err(e) = r.check_fifo() {
            self.disagreements.push(e);
        }
    }

    fn simulate(&mut self, ex: &Example, seed: u64) -> Result<RunReport, String> {
        let r = ex
            .simulated(seed, DEFAULT_STEP_BUDGET)
            .map_err(|e| format!("{} seed {seed}: {e}", ex.kind()))?;
        self.observe(&r);
        Ok(r)
    }

    fn centralize(&mut self, ex: &Example, seed: u64) -> RunReport {
        let r = ex.centralized(seed);
        self.observe(&r);
        r
    }

    fn economy(&mut self) -> Check {
        let scripts = [
            "GET k",
            "PUT k 5",
            "PUT k 5\nGET k",
            "GET a\nPUT a 1\nPUT b 2\nGET b\nGET a\nPUT a 3",
            "",
        ];
        let mut per_kind = BTreeMap::new();
        for text in scripts {
            let script = parse_script(text).map_err(|e| e.to_string())?;
            let b = Example::Kvs(Kvs::new(KvsVariant::Broadcast, script.clone()));
            let e = Example::Kvs(Kvs::new(KvsVariant::Enclave, script.clone()));
            for seed in 0..3 {
                let rb = self.simulate(&b, seed)?;
                let re = self.simulate(&e, seed)?;
                ensure(client_responses(&rb) == client_responses(&re), || {
                    format!("responses differ on {text:?}")
                })?;
                ensure(rb.message_count() == re.message_count() + script.len(), || {
                    format!(
                        "{text:?}: broadcast {} vs enclave {} messages",
                        rb.message_count(),
                        re.message_count()
                    )
                })?;
            }
            if script.len() == 1 {
                let rb = self.centralize(&b, 0);
                let re = self.centralize(&e, 0);
                let (want_b, want_e) = if script[0].is_put() { (5, 4) } else { (4, 3) };
                ensure(rb.message_count() == want_b && re.message_count() == want_e, || {
                    format!("{}: {} vs {}", script[0], rb.message_count(), re.message_count())
                })?;
                per_kind.insert(if script[0].is_put() { "PUT" } else { "GET" }, (want_b, want_e));
            }
        }
        Ok(per_kind
            .iter()
            .map(|(k, (b, e))| format!("{k} {b} vs {e}"))
            .collect::<Vec<_>>()
            .join(", "))
    }

    fn error_path(&mut self) -> Check {
        let script = parse_script("PUT k 1\nGET k\nPUT j 2").map_err(|e| e.to_string())?;
        let ex = Example::Kvs(Kvs::new(KvsVariant::ErrorHandling, script.clone()).with_failing(["backup"]));
        let central = self.centralize(&ex, 0);
        // Each request runs two server enclaves; the second must be silent.
        let spans: Vec<_> = central
            .enclaves
            .iter()
            .filter(|s| names(&s.members) == ["primary", "backup"])
            .collect();
        ensure(spans.len() == 2 * script.len(), || format!("{} server enclaves", spans.len()))?;
        for pair in spans.chunks(2) {
            ensure(pair[1].start == pair[1].end, || {
                format!("second enclave exchanged {} messages", pair[1].end - pair[1].start)
            })?;
        }
        for seed in 0..5 {
            let r = self.simulate(&ex, seed)?;
            ensure(client_responses(&r) == [DESYNC, 0, DESYNC], || {
                format!("responses {:?}", client_responses(&r))
            })?;
            for s in ["primary", "backup"] {
                let taken: Vec<_> = r
                    .endpoint(s)
                    .map(|e| {
                        e.branches
                            .iter()
                            .filter(|b| b.site == "backup-error")
                            .map(|b| b.outcome.clone())
                            .collect()
                    })
                    .unwrap_or_default();
                ensure(taken == ["true", "false", "true"], || format!("{s} took {taken:?}"))?;
            }
            r.check_branch_consistency()?;
        }
        Ok("second enclave silent, error branch at both servers".into())
    }

    fn poly(&mut self) -> Check {
        let script = parse_script("PUT a 1\nGET a\nPUT b 2\nPUT a 3\nGET a\nGET b\nGET zz")
            .map_err(|e| e.to_string())?;
        let (want, store) = reference_responses(&script);
        let want_store: Vec<(String, i64)> = store.into_iter().collect();
        let counts = [0, 1, 2, 5, 10];
        for n in counts {
            let kvs = Kvs::poly(n, script.clone());
            let backups = kvs.backup_names();
            let ex = Example::Kvs(kvs);
            for seed in 0..3 {
                let r = self.simulate(&ex, seed)?;
                ensure(client_responses(&r) == want, || format!("{n} backups: {:?}", client_responses(&r)))?;
                for s in std::iter::once("primary".to_owned()).chain(backups.iter().cloned()) {
                    ensure(store_of(&r, &s) == want_store, || format!("{n} backups: store of {s}"))?;
                }
            }
        }
        let script = vec![Request::Put("k".into(), 1)];
        let ex = Example::Kvs(Kvs::poly(3, script).with_failing(["backup2"]));
        let r = self.simulate(&ex, 0)?;
        ensure(client_responses(&r) == [DESYNC], || format!("failing backup: {:?}", client_responses(&r)))?;
        ensure(store_of(&r, "primary").is_empty(), || "primary store changed".into())?;
        Ok(format!("backup counts {counts:?}, failing backup rejected"))
    }

    fn gmw(&mut self) -> Check {
        let seeds = self.seeds(5);
        let mut runs = 0u64;
        let mut circuits = 0usize;
        for &n in &self.settings.parties.clone() {
            let census = Gmw::parties(n);
            for c in circuits_up_to_depth(&census, self.settings.depth) {
                circuits += 1;
                for inputs in input_assignments(&c) {
                    let want = eval_circuit(&c, &inputs).map_err(|e| e.to_string())?;
                    let ex = Example::Gmw(Gmw {
                        census: census.clone(),
                        circuit: c.clone(),
                        inputs: inputs.clone(),
                    });
                    for seed in 0..seeds {
                        let central = self.centralize(&ex, seed);
                        let sim = self.simulate(&ex, seed)?;
                        for r in [&central, &sim] {
                            for p in census.iter() {
                                ensure(r.result(p.name()) == Some(&Value::Bool(want)), || {
                                    format!("n={n} {c} {inputs:?} seed {seed}: {p} got {:?}", r.result(p.name()))
                                })?;
                            }
                        }
                        runs += 2;
                    }
                }
            }
        }
        Ok(format!(
            "parties {:?}, depth <= {}, {circuits} circuits, {runs} runs",
            self.settings.parties, self.settings.depth
        ))
    }

    fn ot(&mut self) -> Check {
        for bits in 0..8u8 {
            let (b1, b2, s) = (bits & 4 != 0, bits & 2 != 0, bits & 1 != 0);
            let c = FnChoreography::new(census_of(&["sender", "receiver"]).map_err(|e| e.to_string())?, |op| {
                let sender = op.member("sender")?;
                let receiver = op.member("receiver")?;
                let pair = op.locally(&sender, |_| Ok((b1, b2)))?;
                let select = op.locally(&receiver, |_| Ok(s))?;
                ot2(op, &sender, &receiver, &pair, &select)
            });
            let r = choreo_core::run_simulated(&c, bits as u64, DEFAULT_STEP_BUDGET).map_err(|e| e.to_string())?;
            self.observe(&r);
            let got = r.result("receiver").and_then(present).and_then(|v| v.as_bool().ok());
            let want = if s { b2 } else { b1 };
            ensure(got == Some(want), || format!("b1={b1} b2={b2} s={s}: got {got:?}"))?;
            ensure(r.message_count() == 2, || format!("{} messages", r.message_count()))?;
        }
        Ok("8 combinations, 2 messages each".into())
    }

    fn lottery(&mut self) -> Check {
        let runs = self.seeds(100);
        let secrets = vec![11, 22, 33, 44];
        let ex = Example::Lottery(Lottery::new(3, 4, secrets.clone()));
        let servers: Vec<Location> = ["server1", "server2", "server3"]
            .iter()
            .map(|s| Location::new(s).expect("static name"))
            .collect();
        for seed in 0..runs {
            let r = self.simulate(&ex, seed)?;
            let rhos = opened_rhos(&r, "server1").ok_or("server1 has no opened values")?;
            let w = expected_omega(&rhos, 4);
            let got = analyst_output(&r);
            ensure(got == Some(FieldElement::new(secrets[w])), || {
                format!("seed {seed}: omega {w}, analyst {got:?}")
            })?;
            commitments_precede_openings(&r, &servers).map_err(|e| format!("seed {seed}: {e}"))?;
        }
        for target in [TamperTarget::Rho, TamperTarget::Psi] {
            for cheat in 0..3 {
                let mut l = Lottery::new(3, 4, secrets.clone());
                l.tamper = Some(Tamper { server: cheat, target });
                let ex = Example::Lottery(l);
                let r = match ex.simulated(0, DEFAULT_STEP_BUDGET) {
                    Ok(r) => r,
                    Err(SimError::StepBudgetExceeded { report, .. }) => *report,
                };
                self.observe(&r);
                let culprit = format!("server{}", cheat + 1);
                for s in &servers {
                    if s.name() == culprit {
                        continue;
                    }
                    let err = r.endpoint(s.name()).and_then(|e| e.error().cloned());
                    let want = ChoreoError::Protocol(ProtocolError::CommitmentFailed {
                        at: s.to_string(),
                        culprit: culprit.clone(),
                    });
                    ensure(err.as_ref() == Some(&want), || format!("{target:?} by {culprit}: {s} saw {err:?}"))?;
                }
            }
        }
        Ok(format!("{runs} runs, tampering caught at every honest server"))
    }

    fn deadlock(&mut self) -> Check {
        let seeds = self.seeds(50);
        let catalog = catalog();
        for (name, ex) in &catalog {
            for seed in 0..seeds {
                let r = self.simulate(ex, seed).map_err(|e| format!("{name}: {e}"))?;
                ensure(r.succeeded(), || format!("{name} seed {seed}: {:?}", r.first_error()))?;
            }
        }
        for seed in 0..seeds {
            match Example::Broken.simulated(seed, DEFAULT_STEP_BUDGET) {
                Err(SimError::StepBudgetExceeded { .. }) => {}
                Ok(_) => return Err(format!("broken control completed at seed {seed}")),
            }
        }
        Ok(format!("{} instances x {seeds} seeds, control flagged", catalog.len()))
    }

    fn oracle(&mut self) -> Check {
        let seeds = self.seeds(20);
        let catalog = catalog();
        for (name, ex) in &catalog {
            for seed in 0..seeds {
                let central = self.centralize(ex, seed);
                let sim = self.simulate(ex, seed)?;
                ensure(sim.observations() == central.observations(), || {
                    format!("{name} seed {seed}: endpoint views differ")
                })?;
                sim.check_branch_consistency().map_err(|e| format!("{name}: {e}"))?;
                central.check_enclave_silence().map_err(|e| format!("{name}: {e}"))?;
            }
        }
        Ok(format!("{} instances x {seeds} seeds", catalog.len()))
    }

    fn agreement(&mut self) -> Check {
        if self.reports == 0 {
            // Nothing ran yet; exercise the catalog once.
            for (_, ex) in catalog() {
                self.simulate(&ex, 0)?;
            }
        }
        if let Some(e) = self.disagreements.first() {
            return Err(format!("{} problems, first: {e}", self.disagreements.len()));
        }
        Ok(format!("{} reports, {} multiply-owned values", self.reports, self.owned_values))
    }

    fn transport(&mut self) -> Check {
        let exe = self
            .settings
            .exe
            .clone()
            .ok_or("no choreo binary to launch endpoints with")?;
        let dir = scratch_dir()?;
        let script = dir.join("script.txt");
        std::fs::write(&script, "PUT k 5\nGET k\nGET j\n").map_err(|e| e.to_string())?;
        let script = script.to_string_lossy().into_owned();
        let kvs = ["--example", "kvs-enclave", "--seed", "7", "--script", &script];
        let n1 = compare_tcp(&exe, &dir, &kvs)?;
        let lottery = ["--example", "lottery", "--seed", "3", "--servers", "3", "--clients", "4"];
        let n2 = compare_tcp(&exe, &dir, &lottery)?;
        let small = ["--example", "lottery", "--seed", "5", "--servers", "1", "--clients", "1"];
        let n3 = compare_tcp(&exe, &dir, &small)?;
        let _ = std::fs::remove_dir_all(&dir);
        Ok(format!(
            "kvs-enclave over {n1} processes, lottery over {n2} and {n3} processes"
        ))
    }

    fn negative(&mut self) -> Check {
        match Example::Broken.simulated(0, DEFAULT_STEP_BUDGET) {
            Err(e @ SimError::StepBudgetExceeded { .. }) => Err(format!("control flagged: {e}")),
            Ok(_) => Err("control completed, which should be impossible".into()),
        }
    }
}

/// Named example instances exercised by the deadlock and oracle suites.
pub fn catalog() -> Vec<(String, Example)> {
    let mut out = Vec::new();
    let scripts = ["PUT k 5\nGET k", "GET a\nPUT a 1\nPUT a 2\nGET a\nGET b", ""];
    for (i, text) in scripts.iter().enumerate() {
        let script = parse_script(text).expect("static script");
        for v in [KvsVariant::Broadcast, KvsVariant::Enclave, KvsVariant::ErrorHandling] {
            out.push((format!("{}#{i}", v.name()), Example::Kvs(Kvs::new(v, script.clone()))));
        }
        for n in [0, 1, 3] {
            out.push((format!("kvs-poly{n}#{i}"), Example::Kvs(Kvs::poly(n, script.clone()))));
        }
    }
    let script = parse_script(scripts[0]).expect("static script");
    out.push((
        "kvs-error-failing".into(),
        Example::Kvs(Kvs::new(KvsVariant::ErrorHandling, script.clone()).with_failing(["backup"])),
    ));
    out.push((
        "kvs-poly-failing".into(),
        Example::Kvs(Kvs::poly(2, script).with_failing(["backup1"])),
    ));
    let circuits = [
        (2, "(xor (and (in p1) (lit 1)) (in p2))", "p1=1,p2=0"),
        (2, "(and (in p1) (in p2))", "p1=1,p2=1"),
        (3, "(and (xor (in p1) (in p2)) (and (in p3) (in p1)))", "p1=11,p2=0,p3=1"),
        (3, "(lit 1)", ""),
    ];
    for (i, (n, c, inputs)) in circuits.iter().enumerate() {
        out.push((
            format!("gmw#{i}"),
            Example::Gmw(Gmw {
                census: Gmw::parties(*n),
                circuit: parse_circuit(c, *n).expect("static circuit"),
                inputs: parse_inputs(inputs).expect("static inputs"),
            }),
        ));
    }
    out.push(("lottery-3x4".into(), Example::Lottery(Lottery::new(3, 4, vec![11, 22, 33, 44]))));
    out.push(("lottery-1x1".into(), Example::Lottery(Lottery::new(1, 1, vec![-7]))));
    out
}

fn present(v: &Value) -> Option<&Value> {
    match v.as_union() {
        Ok((1, inner)) => Some(inner),
        _ => None,
    }
}

fn names(c: &choreo_core::Census) -> Vec<&str> {
    c.iter().map(|l| l.name()).collect()
}

pub fn client_responses(r: &RunReport) -> Vec<i64> {
    r.result("client")
        .and_then(|v| v.as_pair().ok())
        .and_then(|(responses, _)| present(responses))
        .and_then(|v| v.as_seq().ok())
        .map(|rs| rs.iter().filter_map(|x| x.as_int().ok()).collect())
        .unwrap_or_default()
}

pub fn store_of(r: &RunReport, server: &str) -> Vec<(String, i64)> {
    r.result(server)
        .and_then(|v| v.as_pair().ok())
        .and_then(|(_, store)| present(store))
        .and_then(|v| v.as_map().ok())
        .map(|m| {
            m.iter()
                .filter_map(|(k, v)| Some((k.as_text().ok()?.to_owned(), v.as_int().ok()?)))
                .collect()
        })
        .unwrap_or_default()
}

fn analyst_output(r: &RunReport) -> Option<FieldElement> {
    let (revealed, _) = r.result("analyst")?.as_pair().ok()?;
    FieldElement::from_value(present(revealed)?).ok()
}

fn opened_rhos(r: &RunReport, server: &str) -> Option<Vec<i64>> {
    let (_, rest) = r.result(server)?.as_pair().ok()?;
    let (_, rhos) = rest.as_pair().ok()?;
    present(rhos)?
        .as_seq()
        .ok()?
        .iter()
        .map(|e| e.as_pair().ok()?.1.as_int().ok())
        .collect()
}

fn scratch_dir() -> Result<std::path::PathBuf, String> {
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_nanos())
        .unwrap_or(0);
    let dir = std::env::temp_dir().join(format!("choreo-{}-{stamp}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    Ok(dir)
}

/// Picks ports the OS currently considers free.
pub fn free_ports(n: usize) -> std::io::Result<Vec<u16>> {
    let held: Vec<_> = (0..n)
        .map(|_| std::net::TcpListener::bind("127.0.0.1:0"))
        .collect::<Result<_, _>>()?;
    held.iter().map(|l| l.local_addr().map(|a| a.port())).collect()
}

/// Lines of `out` that describe `role`.
fn lines_for<'a>(out: &'a str, role: &str) -> Vec<&'a str> {
    out.lines()
        .filter(|l| l.split_whitespace().nth(1) == Some(role))
        .collect()
}

struct Reap(Vec<Child>);

impl Drop for Reap {
    fn drop(&mut self) {
        for c in &mut self.0 {
            let _ = c.kill();
            let _ = c.wait();
        }
    }
}

/// Runs `args` once in simulate mode and once as one process per endpoint,
/// then compares what each endpoint printed. Returns the process count.
fn compare_tcp(exe: &Path, dir: &Path, args: &[&str]) -> Result<usize, String> {
    let sim = Command::new(exe)
        .arg("run")
        .args(args)
        .args(["--mode", "simulate"])
        .output()
        .map_err(|e| format!("launch {}: {e}", exe.display()))?;
    let sim_out = String::from_utf8_lossy(&sim.stdout).into_owned();
    ensure(sim.status.success(), || format!("simulate run failed: {sim_out}"))?;
    let census: Vec<String> = sim_out
        .lines()
        .filter_map(|l| l.strip_prefix("RESULT "))
        .filter_map(|l| l.split_whitespace().next().map(str::to_owned))
        .collect();
    let ports = free_ports(census.len()).map_err(|e| e.to_string())?;
    let book: AddressBook = census
        .iter()
        .zip(ports)
        .map(|(l, p)| (l.clone(), format!("127.0.0.1:{p}")))
        .collect();
    let net = dir.join(format!("net-{}.json", args.join("_").replace(['/', ' '], "")));
    std::fs::write(&net, address_book_json(&book)).map_err(|e| e.to_string())?;
    let mut children = Reap(Vec::new());
    for role in &census {
        let child = Command::new(exe)
            .arg("run")
            .args(args)
            .args(["--mode", "endpoint", "--role", role])
            .arg("--config")
            .arg(&net)
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| format!("launch {role}: {e}"))?;
        children.0.push(child);
    }
    let mut outputs = Vec::new();
    for (role, child) in census.iter().zip(std::mem::take(&mut children.0)) {
        let out = child.wait_with_output().map_err(|e| format!("{role}: {e}"))?;
        let text = String::from_utf8_lossy(&out.stdout).into_owned();
        ensure(out.status.success(), || {
            format!("{role} exited with {}: {text}{}", out.status, String::from_utf8_lossy(&out.stderr))
        })?;
        outputs.push((role, text));
    }
    for (role, text) in &outputs {
        let want = lines_for(&sim_out, role);
        let got = lines_for(text, role);
        ensure(want == got, || format!("{role}: simulator {want:?} vs tcp {got:?}"))?;
    }
    Ok(census.len())
}
