#include <iostream>

#include <CLI11.hpp>

#include "mixq/container.hpp"
#include "mixq/datagen.hpp"
#include "mixq/error.hpp"

// Generates the desk-scale demo inputs: a Gaussian-cluster task and the
// matching prototype classifier, written as standard containers.
int main(int argc, char** argv) {
    CLI::App app{"generate a synthetic model + calibration set"};
    std::string model_dir, calib_dir;
    mixq::ClusterTaskSpec task;
    mixq::PrototypeMlpSpec mlp;
    std::uint64_t seed = 42;
    app.add_option("--model-out", model_dir, "model container output directory")->required();
    app.add_option("--calib-out", calib_dir, "calibration container output directory")->required();
    app.add_option("--seed", seed, "seed tying model and data together");
    app.add_option("--samples", task.n_samples, "calibration sample count");
    app.add_option("--input-dim", task.input_dim, "input dimensionality");
    app.add_option("--classes", task.n_classes, "class count");
    app.add_option("--noise-sigma", task.noise_sigma, "cluster noise sigma");
    app.add_option("--hidden-dim", mlp.hidden_dim, "hidden width");
    app.add_option("--layers", mlp.n_dense, "dense layer count");
    CLI11_PARSE(app, argc, argv);

    try {
        task.seed = seed;
        mlp.seed = seed;
        mlp.input_dim = task.input_dim;
        mlp.n_classes = task.n_classes;
        mixq::ModelGraph model = mixq::make_prototype_classifier(mlp);
        mixq::ClusterData data = mixq::make_cluster_data(task);
        mixq::save_model(model, model_dir);
        mixq::save_calibration(data.inputs, data.labels, calib_dir);
        std::cout << model_dir << "\n" << calib_dir << "\n";
    } catch (const mixq::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    }
    return 0;
}
