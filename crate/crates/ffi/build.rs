use std::env;
use std::path::PathBuf;

fn main() {
    let crate_dir = env::var("CARGO_MANIFEST_DIR").unwrap();

    let config = cbindgen::Config {
        language: cbindgen::Language::C,
        include_guard: Some("VOLTGAME_H".to_string()),
        documentation_style: cbindgen::DocumentationStyle::C,
        sys_includes: vec!["stddef.h".into(), "stdint.h".into(), "stdbool.h".into()],
        no_includes: true,
        cpp_compat: true,
        usize_is_size_t: true,
        ..Default::default()
    };

    let bindings = cbindgen::Builder::new()
        .with_crate(&crate_dir)
        .with_config(config)
        .generate()
        .expect("generate C bindings");

    let out = PathBuf::from(&crate_dir).join("include");
    std::fs::create_dir_all(&out).expect("create include directory");
    bindings.write_to_file(out.join("voltgame.h"));

    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=build.rs");
}
