use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use numerosity::BinaryImage;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_numerosity"))
}

fn run(args: &[&str], cwd: &Path) -> Output {
    bin()
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn disk(img: &mut BinaryImage, cx: f64, cy: f64, r: f64) {
    for y in 0..img.height() {
        for x in 0..img.width() {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            if dx * dx + dy * dy <= r * r {
                img.set(x, y, true);
            }
        }
    }
}

fn three_disks() -> BinaryImage {
    let mut img = BinaryImage::new(48, 48);
    disk(&mut img, 10.0, 10.0, 6.0);
    disk(&mut img, 34.0, 12.0, 7.5);
    disk(&mut img, 20.0, 36.0, 5.0);
    img
}

#[test]
fn subitize_counts_three_disks() {
    let dir = TempDir::new().unwrap();
    three_disks()
        .save_pgm(dir.path().join("three.pgm"))
        .unwrap();
    let o = run(&["subitize", "three.pgm"], dir.path());
    assert!(o.status.success(), "{o:?}");
    assert_eq!(stdout(&o).trim(), "3");

    // Inverted polarity counts the same objects.
    three_disks()
        .complement()
        .save_pgm(dir.path().join("inverted.pgm"))
        .unwrap();
    let o = run(&["subitize", "inverted.pgm"], dir.path());
    assert_eq!(stdout(&o).trim(), "3");
}

#[test]
fn subitize_directory_lists_every_image() {
    let dir = TempDir::new().unwrap();
    let imgs = dir.path().join("imgs");
    fs::create_dir(&imgs).unwrap();
    three_disks().save_pgm(imgs.join("a.pgm")).unwrap();
    let mut one = BinaryImage::new(20, 20);
    disk(&mut one, 10.0, 10.0, 4.0);
    one.save_pgm(imgs.join("b.pgm")).unwrap();
    fs::write(imgs.join("notes.txt"), "ignored").unwrap();
    let o = run(&["subitize", "imgs"], dir.path());
    assert!(o.status.success());
    assert_eq!(stdout(&o), "a.pgm\t3\nb.pgm\t1\n");
}

#[test]
fn holes_are_a_domain_error_unless_filled() {
    let dir = TempDir::new().unwrap();
    let ring = BinaryImage::from_ascii(
        "
        .......
        .#####.
        .#...#.
        .#...#.
        .#####.
        .......
        ",
    );
    ring.save_pgm(dir.path().join("ring.pgm")).unwrap();
    let o = run(&["subitize", "ring.pgm"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("hole"));
    let o = run(&["subitize", "ring.pgm", "--holes", "fill"], dir.path());
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "1");
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(
        run(&["generate", "--family", "hexagons"], dir.path())
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        run(&["subitize", "missing.pgm"], dir.path()).status.code(),
        Some(3)
    );
    fs::write(dir.path().join("bad.toml"), "[run]\nseeed = 3\n").unwrap();
    assert_eq!(
        run(&["--config", "bad.toml", "verify"], dir.path())
            .status
            .code(),
        Some(1)
    );
    assert_eq!(run(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn verify_default_bank() {
    let dir = TempDir::new().unwrap();
    let o = run(&["verify"], dir.path());
    assert!(o.status.success());
    assert_eq!(
        stdout(&o).trim(),
        "PASS 65536/65536 exhaustive, 10000/10000 randomized"
    );
}

#[test]
fn verify_rejects_a_broken_bank() {
    let dir = TempDir::new().unwrap();
    let kernel = "- 0 0\n0 + 0\n0 0 0\n\n";
    fs::write(dir.path().join("bad.txt"), kernel.repeat(6)).unwrap();
    let o = run(
        &["verify", "--bank", "bad.txt", "--random", "50"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).starts_with("FAIL"));
}

fn read_tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(root).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn generate_is_reproducible_and_stays_in_out() {
    let dir = TempDir::new().unwrap();
    for out in ["a", "b"] {
        let o = run(
            &[
                "--seed",
                "4",
                "--out",
                out,
                "generate",
                "--family",
                "exp2-squares",
                "--count",
                "18",
            ],
            dir.path(),
        );
        assert!(o.status.success(), "{o:?}");
    }
    let (a, b) = (
        read_tree(&dir.path().join("a")),
        read_tree(&dir.path().join("b")),
    );
    assert_eq!(a.len(), 18 + 2);
    assert_eq!(a, b);
    let mut top: Vec<_> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    top.sort();
    assert_eq!(top, ["a", "b"]);

    let run_json = fs::read_to_string(dir.path().join("a/exp2-squares/run.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&run_json).unwrap();
    assert_eq!(v["seed"], 4);
    assert_eq!(v["config_hash"].as_str().unwrap().len(), 64);

    // A subitized copy agrees with the manifest labels.
    let o = run(&["subitize", "a/exp2-squares"], dir.path());
    for line in stdout(&o).lines() {
        let (name, n) = line.split_once('\t').unwrap();
        assert!(name.ends_with(&format!("_n{n}.pgm")), "{line}");
    }
}

#[test]
fn train_writes_a_checkpoint() {
    let dir = TempDir::new().unwrap();
    fs::write(
        dir.path().join("small.toml"),
        "[experiment.stimulus]\nimage_size = 32\nbaseline_radius = [3.0, 5.0]\narea_window = [60.0, 200.0]\n",
    )
    .unwrap();
    let o = run(
        &[
            "--config",
            "small.toml",
            "--out",
            "data",
            "generate",
            "--family",
            "mixed",
            "--count",
            "24",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{o:?}");
    let o = run(
        &[
            "--seed",
            "2",
            "--out",
            "model",
            "train",
            "--dataset",
            "data/mixed",
            "--validation",
            "data/mixed",
            "--epochs",
            "1",
            "--batch-size",
            "8",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).contains("holdout accuracy"));
    for f in ["model.params", "spec.json", "history.json", "run.json"] {
        assert!(dir.path().join("model").join(f).is_file(), "{f}");
    }
}

#[test]
fn battery_is_byte_reproducible() {
    let dir = TempDir::new().unwrap();
    fs::write(
        dir.path().join("tiny.toml"),
        include_str!("tiny_battery.toml"),
    )
    .unwrap();
    for out in ["r1", "r2"] {
        let o = run(
            &["--config", "tiny.toml", "--out", out, "battery"],
            dir.path(),
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (a, b) = (
        read_tree(&dir.path().join("r1")),
        read_tree(&dir.path().join("r2")),
    );
    assert!(a.len() > 20);
    assert_eq!(
        a.iter().map(|f| &f.0).collect::<Vec<_>>(),
        b.iter().map(|f| &f.0).collect::<Vec<_>>()
    );
    for (x, y) in a.iter().zip(&b) {
        assert!(x.1 == y.1, "{} differs", x.0.display());
    }
    let summary = fs::read_to_string(dir.path().join("r1/summary.json")).unwrap();
    assert!(summary.contains("\"seed\": 5"));
}
