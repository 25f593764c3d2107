use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(rel)
}

fn genplan<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_genplan"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn learn_then_execute_on_generated_instances() {
    let dir = tempfile::tempdir().unwrap();
    let probs = dir.path().join("probs");
    let run = dir.path().join("run");

    let g = genplan([
        "generate".as_ref(),
        "clear".as_ref(),
        "--out".as_ref(),
        probs.as_os_str(),
        "--count".as_ref(),
        "3".as_ref(),
    ]);
    assert!(g.status.success(), "{}", String::from_utf8_lossy(&g.stderr));
    let mut files: Vec<PathBuf> = std::fs::read_dir(&probs)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    assert_eq!(files.len(), 3);

    let p = genplan([
        "pipeline".as_ref(),
        data("configs/clear.toml").as_os_str(),
        "--out".as_ref(),
        run.as_os_str(),
    ]);
    assert!(p.status.success(), "{}", String::from_utf8_lossy(&p.stderr));
    assert!(stdout(&p).contains("25/25"));
    for f in ["theory.wcnf", "qnp.json", "policy.json", "report.json"] {
        assert!(run.join(f).exists(), "{f}");
    }

    let mut args = vec![
        "execute".into(),
        "--domain".into(),
        data("blocks/domain.pddl").into_os_string(),
        "--qnp".into(),
        run.join("qnp.json").into_os_string(),
        "--policy".into(),
        run.join("policy.json").into_os_string(),
    ];
    args.extend(files.iter().map(|f| f.clone().into_os_string()));
    let e = genplan(&args);
    assert!(e.status.success(), "{}", stdout(&e));
    assert_eq!(
        stdout(&e).lines().filter(|l| l.contains("solves")).count(),
        3
    );

    let r = genplan(["report".as_ref(), run.join("report.json").as_os_str()]);
    assert!(r.status.success());
    let table = stdout(&r);
    assert!(table.starts_with("domain"));
    assert!(table.lines().nth(1).unwrap().starts_with("clear"));
}

#[test]
fn missing_config_exits_with_an_error() {
    let o = genplan(["pipeline", "/nonexistent/config.toml"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("config"));
}

#[test]
fn generation_is_seeded() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let o = genplan([
            "generate".as_ref(),
            "gripper".as_ref(),
            "--seed".as_ref(),
            "5".as_ref(),
            "--out".as_ref(),
            d.path().as_os_str(),
        ]);
        assert!(o.status.success());
    }
    let read = |d: &Path| {
        let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(d)
            .unwrap()
            .map(|e| {
                let p = e.unwrap().path();
                (
                    p.file_name().unwrap().to_string_lossy().into_owned(),
                    std::fs::read(&p).unwrap(),
                )
            })
            .collect();
        v.sort();
        v
    };
    let files = read(a.path());
    assert_eq!(files.len(), 10);
    assert_eq!(files, read(b.path()));
}
