#include "af/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace af {

namespace {
constexpr const char* kHeader = "allocforge-checkpoint v1";
}

void save_checkpoint(const std::string& path, const std::vector<const ParamBlock*>& blocks) {
    std::ofstream out(path);
    if (!out) throw CheckpointError("cannot open checkpoint for writing: " + path);
    out << kHeader << "\n";
    char buf[64];
    for (const ParamBlock* p : blocks) {
        out << "block " << p->name;
        out << " " << p->shape.size();
        for (int d : p->shape) out << " " << d;
        out << "\n";
        for (int i = 0; i < p->size(); ++i) {
            std::snprintf(buf, sizeof buf, "%a", p->value[i]);
            out << buf << (i + 1 == p->size() ? "" : " ");
        }
        out << "\n";
    }
    if (!out) throw CheckpointError("write failure: " + path);
}

void load_checkpoint(const std::string& path, const std::vector<ParamBlock*>& blocks) {
    std::ifstream in(path);
    if (!in) throw CheckpointError("cannot open checkpoint: " + path);
    std::string header;
    std::getline(in, header);
    if (header != kHeader) throw CheckpointError("bad checkpoint header: " + header);
    std::size_t next = 0;
    std::string tag;
    while (in >> tag) {
        if (tag != "block") throw CheckpointError("expected 'block', got " + tag);
        if (next >= blocks.size()) throw CheckpointError("checkpoint has more blocks than expected");
        ParamBlock* p = blocks[next++];
        std::string name;
        std::size_t ndims = 0;
        in >> name >> ndims;
        if (name != p->name) throw CheckpointError("block name mismatch: " + name + " vs " + p->name);
        if (ndims != p->shape.size()) throw CheckpointError("rank mismatch for " + name);
        for (std::size_t d = 0; d < ndims; ++d) {
            int dim = 0;
            in >> dim;
            if (dim != p->shape[d]) throw CheckpointError("shape mismatch for " + name);
        }
        for (int i = 0; i < p->size(); ++i) {
            std::string tok;
            if (!(in >> tok)) throw CheckpointError("truncated values for " + name);
            p->value[i] = std::strtod(tok.c_str(), nullptr);
        }
    }
    if (next != blocks.size()) throw CheckpointError("checkpoint missing blocks");
}

}  // namespace af
