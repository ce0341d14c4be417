// Copyright 2026 The mosco Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Every subcommand against checked-in outputs. `UPDATE_GOLDEN=1`
//! rewrites the expected files.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

const CASES: [&str; 6] = ["simulate", "fit", "mosco", "lan", "lr", "hessian"];

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn run(name: &str, out: &Path) {
    let status = Command::new(env!("CARGO_BIN_EXE_mosco"))
        .arg(name)
        .arg("--config")
        .arg(fixture(name).join("config.json"))
        .arg("--out")
        .arg(out)
        .arg("--quiet")
        .status()
        .unwrap();
    assert!(status.success(), "{name} exited with {status}");
}

fn listing(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    names
}

#[test]
fn outputs_match_golden_files() {
    let update = std::env::var_os("UPDATE_GOLDEN").is_some_and(|v| v == "1");
    for name in CASES {
        let tmp = tempfile::tempdir().unwrap();
        run(name, tmp.path());
        let expected = fixture(name).join("expected");
        if update {
            let _ = fs::remove_dir_all(&expected);
            fs::create_dir_all(&expected).unwrap();
            for f in listing(tmp.path()) {
                fs::copy(tmp.path().join(&f), expected.join(&f)).unwrap();
            }
            continue;
        }
        assert!(expected.is_dir(), "no golden files for {name}; rerun with UPDATE_GOLDEN=1");
        assert_eq!(listing(tmp.path()), listing(&expected), "{name}: output files differ");
        for f in listing(&expected) {
            let got = fs::read(tmp.path().join(&f)).unwrap();
            let want = fs::read(expected.join(&f)).unwrap();
            assert!(got == want, "{name}/{f} differs from the golden copy");
        }
    }
}
