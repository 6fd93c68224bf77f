use clap::Parser;
use otlab_cli::{execute, Cli};
use serde_json::json;

fn main() {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match execute(&cli, &argv[1..]) {
        Ok(report) => {
            println!(
                "{}",
                serde_json::to_string(&report).expect("reports serialize")
            );
        }
        Err(e) => {
            eprintln!("error: {}", e.message);
            let body =
                json!({ "error": { "code": e.code, "message": e.message, "detail": e.detail } });
            println!("{body}");
            std::process::exit(e.code);
        }
    }
}
