use clap::Parser;
use handoff_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(m) => {
            for f in &m.files {
                println!("{}\t{}", f.sha256, f.path);
            }
        }
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(1);
        }
    }
}
