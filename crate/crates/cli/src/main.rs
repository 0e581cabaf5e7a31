use clap::Parser;

fn main() {
    let cli = flowcnn_cli::Cli::parse();
    if let Err(e) = flowcnn_cli::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(flowcnn_cli::exit_code(&e));
    }
}
