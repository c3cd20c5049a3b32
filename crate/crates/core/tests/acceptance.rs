//! Acceptance checks AC1-AC9. Each criterion prints one `PASS`/`FAIL` line;
//! the test fails if any criterion fails.

mod common;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use colorindex::gen::{cycle_database, random_database, random_fc_query, rng, QueryShape};
use colorindex::{
    check_free_connex_acyclic, count_with, enumerate, naive_refine, parse_query, refine,
    ColorIndex, Database, ExecMode, QueryPlan,
};
use rand::Rng;

use common::{check_query, graph_of, movies, no_coarser_stable, random_db, subdivision_refine};

const AC1_MAX_BUILD: Duration = Duration::from_secs(1);
const AC3_SIZES: [usize; 4] = [3, 10, 1_000, 100_000];
const AC3_MAX_BUILD: Duration = Duration::from_secs(10);
const AC5_INSTANCES: usize = 1_000;
const AC5_QUERIES_PER_DB: usize = 3;
const AC5_MAX_TIME: Duration = Duration::from_secs(60);
const AC6_GRAPHS: usize = 300;
const AC7_KAPPA: u64 = 64;
const AC7_MIN_RESULTS: usize = 10_000;
const AC7_EMIT_CAP: usize = 200_000;
const SCALING_SIZES: [usize; 3] = [1_000, 10_000, 100_000];
const AC8_REPEATS: usize = 40;
const AC8_FLAT_RATIO: f64 = 3.0;
const AC8_BUILD_RATIO: f64 = 3.0;
const AC9_GRAPHS: usize = 120;

type Outcome = Result<String, String>;

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("AC1", ac1),
        ("AC2", ac2),
        ("AC3", ac3),
        ("AC4", ac4),
        ("AC5", ac5),
        ("AC6", ac6),
        ("AC7", ac7),
        ("AC8", ac8),
        ("AC9", ac9),
    ];
    let mut failed = Vec::new();
    for (name, f) in criteria {
        match f() {
            Ok(msg) => println!("{name} PASS {msg}"),
            Err(msg) => {
                println!("{name} FAIL {msg}");
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ms(d: Duration) -> String {
    format!("{:.3} ms", d.as_secs_f64() * 1e3)
}

fn ac1() -> Outcome {
    let db = movies();
    let start = Instant::now();
    let idx = ColorIndex::build_with(&db, ExecMode::Sequential);
    let took = start.elapsed();
    let idb = idx.database();
    let got: BTreeSet<BTreeSet<&str>> = idx
        .coloring()
        .classes()
        .iter()
        .map(|class| class.iter().map(|&v| idb.name(v)).collect())
        .collect();
    let want: BTreeSet<BTreeSet<&str>> = [
        vec!["PS"],
        vec!["LM", "MM"],
        vec!["Dr.S"],
        vec!["18m", "34m"],
    ]
    .into_iter()
    .map(|c| c.into_iter().collect())
    .collect();
    ensure(got == want, || format!("classes {got:?}"))?;
    ensure(took < AC1_MAX_BUILD, || format!("build took {}", ms(took)))?;
    Ok(format!("4 classes {{PS}} {{LM,MM}} {{Dr.S}} {{18m,34m}} in {}", ms(took)))
}

fn ac2() -> Outcome {
    let idx = ColorIndex::build_with(&movies(), ExecMode::Sequential);
    let idb = idx.database();
    let color = |name: &str| idx.coloring().color(idb.constants().id(name).unwrap());
    let expected_colors = [("PS", 0), ("LM", 1), ("MM", 1), ("Dr.S", 2), ("18m", 3), ("34m", 3)];
    for (name, c) in expected_colors {
        ensure(color(name) == c, || format!("{name} has color c{}", color(name)))?;
    }

    let cdb = idx.color_db();
    let schema = cdb.schema();
    let mut facts = BTreeSet::new();
    let mut e_relations = 0;
    for (id, sym) in schema.symbols() {
        let rel = cdb.relation(id);
        if sym.arity == 1 {
            ensure(rel.is_empty(), || format!("unary {} is non-empty", sym.name))?;
            continue;
        }
        e_relations += 1;
        for &(a, b) in rel.binary() {
            facts.insert(format!("{}({},{})", sym.name, cdb.name(a), cdb.name(b)));
        }
    }
    let want: BTreeSet<String> = [
        "E_{{(P,+),(A,-)}}(c0,c1)",
        "E_{{(P,+)}}(c0,c1)",
        "E_{{(A,-)}}(c0,c1)",
        "E_{{(P,-),(A,+)}}(c1,c0)",
        "E_{{(P,-)}}(c1,c0)",
        "E_{{(A,+)}}(c1,c0)",
        "E_{{(S,+)}}(c1,c3)",
        "E_{{(S,-)}}(c3,c1)",
        "E_{{(M,+)}}(c1,c2)",
        "E_{{(M,-)}}(c2,c1)",
    ]
    .into_iter()
    .map(String::from)
    .collect();
    ensure(facts == want, || format!("D_col facts {facts:?}"))?;
    ensure(e_relations == 10, || format!("{e_relations} E relations in the closure"))?;
    ensure(cdb.size() == 10, || format!("|D_col| = {}", cdb.size()))?;

    // Labels outside the closure have no relation and no hat successors.
    let p = idx.sigma1().schema().lookup("P").unwrap();
    let s = idx.sigma1().schema().lookup("S").unwrap();
    use colorindex::{EdgeLabel, LabelAtom};
    let outside = EdgeLabel::new([LabelAtom::forward(p), LabelAtom::forward(s)]).unwrap();
    ensure(idx.color_relation(&outside).is_none(), || "{(P,+),(S,+)} has a relation".into())?;
    for c in 0..4 {
        for c2 in 0..4 {
            let n = idx.hat_succ_count(&outside, c, c2).unwrap();
            ensure(n == 0, || format!("hat count {n} for {{(P,+),(S,+)}}"))?;
        }
    }
    Ok("10 E relations with one tuple each, unary relations empty, |D_col| = 10".into())
}

fn ac3() -> Outcome {
    let mut parts = Vec::new();
    for n in AC3_SIZES {
        let db = cycle_database(n);
        let start = Instant::now();
        let idx = ColorIndex::build(&db);
        let took = start.elapsed();
        let (c, dcol, d) = (idx.num_colors(), idx.color_db().size(), db.size());
        ensure(c == 1 && dcol == 2 && d == n, || {
            format!("n={n}: |C|={c} |D_col|={dcol} |D|={d}")
        })?;
        ensure(took < AC3_MAX_BUILD, || format!("n={n}: build took {}", ms(took)))?;
        parts.push(format!("n={n} build {}", ms(took)));
    }
    Ok(format!("|C|=1 |D_col|=2 |D|=n; {}", parts.join(", ")))
}

fn ac4() -> Outcome {
    let db = colorindex::load_database("R(a,b)\n", None).unwrap();
    let idx = ColorIndex::build(&db);
    let q = parse_query("Ans(x1,x2) <- R(x1,x2), R(x3,x1), R(x2,x2).").unwrap();
    let plan = QueryPlan::new(&q, idx.sigma1()).map_err(|e| e.to_string())?;
    ensure(plan.components().len() == 1, || "expected one component".into())?;
    let c = &plan.components()[0];
    let q1 = c.q1().to_string();
    let qcol = c.color_query().to_string();
    ensure(q1 == "Ans(x1,x2) <- R(x1,x2), R(x3,x1), S_R(x2).", || format!("Q1 = {q1}"))?;
    ensure(
        qcol == "Ans(x1,x2) <- S_R(x2), E_{{(R,+)}}(x1,x2), E_{{(R,-)}}(x1,x3).",
        || format!("Q_col = {qcol}"),
    )?;
    Ok(format!("Q1 = {q1}  Q_col = {qcol}"))
}

/// Databases with at most 8 constants over two binary and one unary
/// symbol, each paired with random fc-ACQs.
fn random_instances(seed: u64, count: usize) -> Vec<(Database, Vec<colorindex::ConjunctiveQuery>)> {
    let mut r = rng(seed);
    (0..count)
        .map(|_| {
            let n = r.gen_range(1..=8);
            let db = random_db(&mut r, n, 2, 1);
            let queries = (0..AC5_QUERIES_PER_DB)
                .map(|_| random_fc_query(&mut r, db.schema(), QueryShape::default()))
                .collect();
            (db, queries)
        })
        .collect()
}

fn ac5() -> Outcome {
    let start = Instant::now();
    let mut checked = 0;
    let mut nonempty = 0;
    let mut mismatches = Vec::new();
    for (db, queries) in random_instances(5, AC5_INSTANCES) {
        let idx = ColorIndex::build_with(&db, ExecMode::Sequential);
        for q in &queries {
            ensure(check_free_connex_acyclic(q).is_ok(), || format!("generated non-fc {q}"))?;
            checked += 1;
            if !colorindex::naive_eval(&db, q).is_empty() {
                nonempty += 1;
            }
            if let Err(e) = check_query(&db, &idx, q) {
                mismatches.push(e);
            }
        }
    }
    let took = start.elapsed();
    ensure(mismatches.is_empty(), || {
        format!("{} mismatches, first: {}", mismatches.len(), mismatches[0])
    })?;
    ensure(took < AC5_MAX_TIME, || format!("suite took {}", ms(took)))?;
    Ok(format!(
        "{AC5_INSTANCES} databases, {checked} queries ({nonempty} non-empty), 0 mismatches in {}",
        ms(took)
    ))
}

fn ac6() -> Outcome {
    let mut r = rng(6);
    let mut nontrivial = 0;
    for i in 0..AC6_GRAPHS {
        let n = r.gen_range(1..=8);
        let binary = r.gen_range(1..=2);
        let unary = r.gen_range(0..=1);
        let db = random_db(&mut r, n, binary, unary);
        let g = graph_of(&db);
        let fast = refine(&g);
        let slow = naive_refine(&g);
        ensure(fast == slow, || format!("graph {i}: refine {:?} != naive {:?}", fast.colors(), slow.colors()))?;
        no_coarser_stable(&g, &fast).map_err(|e| format!("graph {i}: {e}"))?;
        if fast.num_colors() < g.vertex_count() {
            nontrivial += 1;
        }
    }
    Ok(format!(
        "{AC6_GRAPHS} graphs: refine = naive_refine, no coarser stable partition ({nontrivial} non-discrete)"
    ))
}

struct Delay {
    results: usize,
    max_gap: u64,
    k: usize,
}

/// Largest number of cursor steps between consecutive outputs, including
/// the first output and the end-of-enumeration signal.
fn measure_delay(idx: &ColorIndex, plan: &QueryPlan, cap: usize) -> Delay {
    let mut e = enumerate(idx, plan);
    let mut last = e.steps();
    let mut max_gap = 0;
    let mut results = 0;
    loop {
        let more = e.next_tuple().is_some();
        max_gap = max_gap.max(e.steps() - last);
        last = e.steps();
        if !more {
            break;
        }
        results += 1;
        if results >= cap {
            break;
        }
    }
    Delay {
        results,
        max_gap,
        k: plan.arity(),
    }
}

/// Least-squares slope of `ys` against `xs` and its standard error.
fn slope(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - a - b * x).powi(2)).sum();
    let se = if xs.len() > 2 { (rss / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    (b, se)
}

const CYCLE_QUERIES: [&str; 4] = [
    "Ans(x,y,z) <- R(x,y), R(y,z).",
    "Ans(x,y) <- R(x,u), R(y,w).",
    "Ans(y) <- R(x,y), R(y,z), R(z,w).",
    "Ans(a,b,c,d) <- R(a,b), R(b,c), R(c,d), R(d,e).",
];

fn ac7() -> Outcome {
    let mut worst_ratio = 0f64;
    let mut measured = 0usize;
    let check = |d: &Delay, what: &dyn Fn() -> String| {
        ensure(d.max_gap <= AC7_KAPPA * d.k as u64, || {
            format!("{}: {} steps between outputs, k={}", what(), d.max_gap, d.k)
        })
    };

    for (db, queries) in random_instances(7, AC5_INSTANCES) {
        let idx = ColorIndex::build_with(&db, ExecMode::Sequential);
        for q in queries.iter().filter(|q| !q.is_boolean()) {
            let plan = QueryPlan::new(q, idx.sigma1()).map_err(|e| e.to_string())?;
            let d = measure_delay(&idx, &plan, usize::MAX);
            check(&d, &|| q.to_string())?;
            worst_ratio = worst_ratio.max(d.max_gap as f64 / d.k as f64);
            measured += 1;
        }
    }

    let mut slopes = Vec::new();
    for text in CYCLE_QUERIES {
        let q = parse_query(text).unwrap();
        let mut gaps = Vec::new();
        let mut big = 0;
        for n in SCALING_SIZES {
            let idx = ColorIndex::build(&cycle_database(n));
            let plan = QueryPlan::new(&q, idx.sigma1()).map_err(|e| e.to_string())?;
            let d = measure_delay(&idx, &plan, AC7_EMIT_CAP);
            check(&d, &|| format!("{text} on C_{n}"))?;
            worst_ratio = worst_ratio.max(d.max_gap as f64 / d.k as f64);
            big = big.max(d.results);
            gaps.push(d.max_gap as f64);
        }
        ensure(big >= AC7_MIN_RESULTS, || format!("{text}: only {big} results"))?;
        let xs: Vec<f64> = SCALING_SIZES.iter().map(|&n| n as f64).collect();
        let (b, se) = slope(&xs, &gaps);
        ensure(b.abs() <= 2.0 * se + 1e-12, || {
            format!("{text}: delay slope {b:.3e} (se {se:.3e}) over n, gaps {gaps:?}")
        })?;
        slopes.push(b);
    }
    let max_slope = slopes.iter().fold(0f64, |m, s| m.max(s.abs()));
    Ok(format!(
        "kappa = {AC7_KAPPA}, max steps/k = {worst_ratio:.1} over {measured} random queries and {} cycle queries, max |slope| = {max_slope:.1e}",
        CYCLE_QUERIES.len()
    ))
}

fn min_time<T>(repeats: usize, mut f: impl FnMut() -> T) -> Duration {
    (0..repeats)
        .map(|_| {
            let start = Instant::now();
            std::hint::black_box(f());
            start.elapsed()
        })
        .min()
        .unwrap()
}

fn spread(ts: &[Duration]) -> f64 {
    let max = ts.iter().max().unwrap().as_secs_f64();
    let min = ts.iter().min().unwrap().as_secs_f64();
    max / min
}

fn ac8() -> Outcome {
    let mode = ExecMode::Sequential;
    let mut report = Vec::new();

    let indexes: Vec<ColorIndex> =
        SCALING_SIZES.iter().map(|&n| ColorIndex::build_with(&cycle_database(n), mode)).collect();
    for text in CYCLE_QUERIES {
        let q = parse_query(text).unwrap();
        let mut pre = Vec::new();
        let mut cnt = Vec::new();
        for idx in &indexes {
            pre.push(min_time(AC8_REPEATS, || {
                let plan = QueryPlan::new(&q, idx.sigma1()).unwrap();
                enumerate(idx, &plan).arity()
            }));
            let plan = QueryPlan::new(&q, idx.sigma1()).unwrap();
            cnt.push(min_time(AC8_REPEATS, || count_with(idx, &plan, mode)));
        }
        let (p, c) = (spread(&pre), spread(&cnt));
        ensure(p < AC8_FLAT_RATIO, || format!("{text}: preprocessing max/min {p:.2} {pre:?}"))?;
        ensure(c < AC8_FLAT_RATIO, || format!("{text}: count max/min {c:.2} {cnt:?}"))?;
        report.push(format!("{p:.2}/{c:.2}"));
    }

    type Family = fn(usize) -> Database;
    let families: [(&str, Family); 2] = [
        ("cycle", cycle_database),
        ("random", |n| random_database(n, 2 * n, n as u64).unwrap()),
    ];
    let mut fits = Vec::new();
    for (name, family) in families {
        let mut norm = Vec::new();
        for n in SCALING_SIZES {
            let db = family(n);
            let t = min_time(3, || ColorIndex::build_with(&db, mode));
            let nf = n as f64;
            norm.push(t.as_secs_f64() / (nf * nf.log2()));
        }
        let min = norm.iter().cloned().fold(f64::INFINITY, f64::min);
        let ratio = norm.last().unwrap() / min;
        ensure(ratio <= AC8_BUILD_RATIO, || {
            format!("{name} build t/(n log n) at largest n is {ratio:.2}x the minimum: {norm:?}")
        })?;
        fits.push(format!("{name} {ratio:.2}"));
    }
    Ok(format!(
        "preprocessing/count max/min per query [{}] < {AC8_FLAT_RATIO}; build t/(n log n) largest/min [{}] <= {AC8_BUILD_RATIO}",
        report.join(", "),
        fits.join(", ")
    ))
}

/// Disjoint union of `copies` renamed copies of `db`.
fn copies(db: &Database, copies: usize) -> Database {
    let facts = db.to_fact_list();
    let mut text = String::new();
    for j in 0..copies {
        text.push_str(&facts.replace('v', &format!("k{j}v")));
    }
    colorindex::load_database(&text, Some(db.schema())).unwrap()
}

fn ac9() -> Outcome {
    let mut r = rng(9);
    let mut nontrivial = 0;
    let mut largest = 0;
    for i in 0..AC9_GRAPHS {
        let binary = r.gen_range(1..=3);
        let unary = r.gen_range(0..=2);
        let db = if i % 2 == 0 {
            let n = r.gen_range(1..=50);
            let p = r.gen_range(0.01..0.15);
            colorindex::gen::random_dense_database(&mut r, n, binary, unary, p, true)
        } else {
            let n = r.gen_range(1..=12);
            let base = random_db(&mut r, n, binary, unary);
            copies(&base, r.gen_range(1..=4))
        };
        let g = graph_of(&db);
        largest = largest.max(g.vertex_count());
        let direct = refine(&g);
        let sub = subdivision_refine(&g);
        ensure(direct == sub, || {
            format!("graph {i}: direct {:?} != subdivision {:?}", direct.colors(), sub.colors())
        })?;
        if direct.num_colors() < g.vertex_count() {
            nontrivial += 1;
        }
    }
    Ok(format!(
        "{AC9_GRAPHS} graphs up to {largest} vertices: subdivision route = direct refinement ({nontrivial} non-discrete)"
    ))
}
