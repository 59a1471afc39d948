#include <iostream>

#include <CLI11.hpp>

#include "flatbench/png_io.hpp"
#include "flatbench/serialization.hpp"

using namespace flatbench;

int main(int argc, char** argv) {
  CLI::App app{"Perception, simulation and frame utilities"};
  app.require_subcommand(1);
  std::string config_file;
  app.add_option("--config", config_file, "RunConfig JSON overriding the defaults")->check(CLI::ExistingFile);

  std::string image, mask_in, heat_png, heat_json;
  auto* perceive = app.add_subcommand("perceive", "wrinkle field and proposed action for a PNG observation");
  perceive->add_option("image", image, "RGB PNG")->required()->check(CLI::ExistingFile);
  perceive->add_option("--mask", mask_in, "cloth mask PNG (default: HSV segmentation)")->check(CLI::ExistingFile);
  perceive->add_option("--heatmap-png", heat_png, "write the heatmap image here");
  perceive->add_option("--heatmap-json", heat_json, "write the wrinkle field JSON here");
  std::uint64_t seed = 0;
  perceive->add_option("--seed", seed, "policy seed");

  std::string out_dir;
  int folds = -1;
  double intensity = -1.0;
  auto* crumple_cmd = app.add_subcommand("crumple", "crumple a flat cloth and write observation, mask and snapshot");
  crumple_cmd->add_option("--seed", seed, "crumple seed");
  crumple_cmd->add_option("--folds", folds, "fold count (default from config)");
  crumple_cmd->add_option("--intensity", intensity, "crumple intensity (default from config)");
  crumple_cmd->add_option("--out", out_dir, "output directory")->required();

  std::string transforms;
  std::vector<double> pixel;
  auto* frames_cmd = app.add_subcommand("frames", "map a pixel to the robot base frame");
  frames_cmd->add_option("--transforms", transforms, "transform chain JSON")->required()->check(CLI::ExistingFile);
  frames_cmd->add_option("--pixel", pixel, "pixel x y")->required()->expected(2);

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg;
    if (!config_file.empty()) cfg = run_config_from_json(read_json_file(config_file));

    if (*perceive) {
      const RgbImage img = decode_png_rgb(read_file(image));
      const Mask mask = mask_in.empty() ? segment_cloth(img, cfg.hsv) : decode_png_mask(read_file(mask_in));
      const BlockGrid grid = split_blocks(img.width(), img.height(), cfg.grid_rows, cfg.grid_cols);
      const FilterBank bank(cfg.gabor, cfg.n_orientations);
      const WrinkleField field = wrinkle_field(img, mask, grid, bank, {cfg.policy.min_cloth_fraction, true});
      if (!heat_png.empty()) write_file(heat_png, encode_png(heatmap_image(field)));
      if (!heat_json.empty()) write_file(heat_json, wrinkle_field_to_json(field).dump(2) + "\n");
      Json out{{"coverage", coverage(mask)}};
      if (mask.count() > 0) {
        const Point2 com = center_of_mass(mask);
        out["com"] = {com.x(), com.y()};
        try {
          out["action"] = action_to_json(proposed_action(field, com, {seed}, cfg.policy));
        } catch (const Error& e) {
          if (e.code() != ErrorCode::NoWrinkle) throw;
          out["action"] = nullptr;
          out["message"] = "cloth appears flat";
        }
      }
      std::cout << out.dump(2) << "\n";
    } else if (*crumple_cmd) {
      ClothState s = init_flat(cfg.cloth_nx, cfg.cloth_ny, cfg.rest_len, cfg.sim);
      s = crumple(std::move(s), seed, folds >= 0 ? folds : cfg.crumple_folds,
                  intensity >= 0.0 ? intensity : cfg.crumple_intensity, cfg.sim);
      const RgbImage img = render_topdown(s, cfg.camera, cfg.cloth_color, cfg.background_color);
      const Mask mask = segment_cloth(img, cfg.hsv);
      std::filesystem::create_directories(out_dir);
      const std::filesystem::path dir(out_dir);
      write_file(dir / "observation.png", encode_png(img));
      write_file(dir / "mask.png", encode_png(mask));
      write_file(dir / "state.json", cloth_state_to_json(s, cfg.sim).dump() + "\n");
      std::cout << "coverage " << coverage(mask) << "\n";
    } else if (*frames_cmd) {
      const RobotChain chain = robot_chain_from_json(read_json_file(transforms));
      const Eigen::Vector3d p = chain.to_base({pixel[0], pixel[1]});
      std::cout << Json{{"base_point", {p.x(), p.y(), p.z()}}}.dump() << "\n";
    }
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
