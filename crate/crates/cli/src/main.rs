use clap::Parser;
use swarmheal_cli::{run, Cli};

fn main() {
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    match run(&cli, argv) {
        Ok(report) => {
            println!("{}", report.summary);
            println!("wrote {} ({})", report.out_dir.display(), report.outputs.join(", "));
        }
        Err(e) => {
            eprintln!("swarmheal {}: {e}", cli.kind.name());
            std::process::exit(e.exit_code());
        }
    }
}
