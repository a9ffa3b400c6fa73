#include <fstream>
#include <sstream>

#include "blastoseg/data.hpp"

namespace blastoseg::data {
namespace {

std::string frame_name(int frame) {
  std::ostringstream os;
  os.width(3);
  os.fill('0');
  os << frame;
  return os.str() + ".png";
}

}  // namespace

void write_dataset(const std::filesystem::path& root, const std::vector<SamplePair>& pairs) {
  std::filesystem::create_directories(root);
  std::ofstream manifest(root / "manifest.csv");
  if (!manifest) throw IoError("cannot write manifest in '" + root.string() + "'");
  manifest << "source_id,frame,image,mask\n";
  for (const auto& p : pairs) {
    if (p.source_id.empty() || p.source_id.find_first_of(",/\\") != std::string::npos) {
      throw ValidationError("source id '" + p.source_id + "' is not a valid directory name");
    }
    const auto image = std::filesystem::path("images") / p.source_id / frame_name(p.frame_index);
    const auto mask = std::filesystem::path("masks") / p.source_id / frame_name(p.frame_index);
    write_png_gray(root / image, p.image);
    write_png_mask(root / mask, p.mask);
    manifest << p.source_id << ',' << p.frame_index << ',' << image.generic_string() << ','
             << mask.generic_string() << '\n';
  }
  if (!manifest) throw IoError("failed writing manifest in '" + root.string() + "'");
}

std::vector<SamplePair> read_dataset(const std::filesystem::path& root) {
  std::ifstream manifest(root / "manifest.csv");
  if (!manifest) throw IoError("no manifest.csv in '" + root.string() + "'");
  std::string line;
  std::getline(manifest, line);
  if (line != "source_id,frame,image,mask") throw IoError("unexpected manifest header in '" + root.string() + "'");
  std::vector<SamplePair> pairs;
  int row = 1;
  while (std::getline(manifest, line)) {
    ++row;
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string id, frame, image, mask;
    if (!std::getline(is, id, ',') || !std::getline(is, frame, ',') || !std::getline(is, image, ',') ||
        !std::getline(is, mask)) {
      throw IoError("malformed manifest row " + std::to_string(row));
    }
    SamplePair p;
    p.source_id = id;
    try {
      p.frame_index = std::stoi(frame);
    } catch (const std::logic_error&) {
      throw IoError("bad frame index on manifest row " + std::to_string(row));
    }
    p.image = read_png_gray(root / image);
    p.mask = read_png_mask(root / mask);
    if (p.image.width != p.mask.width) throw DimensionError("w", "image and mask widths differ for " + image);
    if (p.image.height != p.mask.height) throw DimensionError("h", "image and mask heights differ for " + image);
    pairs.push_back(std::move(p));
  }
  return pairs;
}

}  // namespace blastoseg::data
