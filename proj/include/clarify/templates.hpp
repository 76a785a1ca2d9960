#pragma once

#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "clarify/builtin_templates.hpp"
#include "clarify/errors.hpp"
#include "clarify/types.hpp"

namespace clarify {

// The prompt variants the library can render. Each (task, variant) pair maps
// to one template data file.
enum class PromptVariant {
    direct,
    follow,
    disambig,
    selfask,
    intentsim_question,
    intentsim_answer,
    oracle,
};

inline const char* to_string(PromptVariant variant) {
    switch (variant) {
        case PromptVariant::direct: return "direct";
        case PromptVariant::follow: return "follow";
        case PromptVariant::disambig: return "disambig";
        case PromptVariant::selfask: return "selfask";
        case PromptVariant::intentsim_question: return "intentsim_question";
        case PromptVariant::intentsim_answer: return "intentsim_answer";
        case PromptVariant::oracle: return "oracle";
    }
    throw Error("unreachable");
}

inline PromptVariant prompt_variant_from_string(const std::string& s) {
    for (auto v : {PromptVariant::direct, PromptVariant::follow, PromptVariant::disambig,
                   PromptVariant::selfask, PromptVariant::intentsim_question,
                   PromptVariant::intentsim_answer, PromptVariant::oracle}) {
        if (s == to_string(v)) return v;
    }
    throw ConfigError("unknown prompt variant '" + s + "'");
}

// One named block of a template: either a chat fragment (role-tagged
// messages) or a plain text snippet.
struct TemplateSection {
    bool chat = false;
    std::vector<ChatMessage> messages;  // chat sections
    std::string text;                   // text sections
};

using Substitutions = std::map<std::string, std::string>;

// Template file grammar, line oriented:
//   @section-name   starts a section
//   [role]          starts a message within the section (system/user/assistant)
//   anything else   content; {placeholder} is replaced at render time
// Leading and trailing blank lines of every block are trimmed; interior
// blank lines are kept.
class Template {
public:
    Template(std::string name, std::string_view source) : name_(std::move(name)) {
        parse(source);
    }

    const std::string& name() const { return name_; }

    bool has(const std::string& section) const { return sections_.count(section) > 0; }

    const TemplateSection& section(const std::string& section_name) const {
        auto it = sections_.find(section_name);
        if (it == sections_.end()) {
            throw ConfigError("template '" + name_ + "' has no section '@" + section_name + "'");
        }
        return it->second;
    }

    std::vector<ChatMessage> render_chat(const std::string& section_name,
                                         const Substitutions& values) const {
        const auto& block = section(section_name);
        if (!block.chat) {
            throw ConfigError("template '" + name_ + "' section '@" + section_name +
                              "' is not a chat fragment");
        }
        std::vector<ChatMessage> out;
        out.reserve(block.messages.size());
        for (const auto& message : block.messages) {
            out.push_back({message.role, substitute(message.content, values)});
        }
        return out;
    }

    std::string render_text(const std::string& section_name, const Substitutions& values) const {
        const auto& block = section(section_name);
        if (block.chat) {
            throw ConfigError("template '" + name_ + "' section '@" + section_name +
                              "' is a chat fragment, not text");
        }
        return substitute(block.text, values);
    }

    // Verbatim section text, for parser prefixes that take no placeholders.
    const std::string& text(const std::string& section_name) const {
        const auto& block = section(section_name);
        if (block.chat) {
            throw ConfigError("template '" + name_ + "' section '@" + section_name +
                              "' is a chat fragment, not text");
        }
        return block.text;
    }

    // Single-pass {placeholder} substitution; values are inserted verbatim
    // and never re-scanned. Unknown placeholders are template bugs.
    std::string substitute(const std::string& pattern, const Substitutions& values) const {
        std::string out;
        out.reserve(pattern.size());
        std::size_t i = 0;
        while (i < pattern.size()) {
            const char c = pattern[i];
            if (c != '{') {
                out.push_back(c);
                ++i;
                continue;
            }
            const auto close = pattern.find('}', i + 1);
            if (close == std::string::npos) {
                throw ConfigError("template '" + name_ + "': unterminated placeholder near '" +
                                  pattern.substr(i, 20) + "'");
            }
            const std::string key = pattern.substr(i + 1, close - i - 1);
            auto it = values.find(key);
            if (it == values.end()) {
                throw ConfigError("template '" + name_ + "': no value for placeholder {" + key +
                                  "}");
            }
            out += it->second;
            i = close + 1;
        }
        return out;
    }

private:
    static void trim_blank_edges(std::vector<std::string>& lines) {
        auto blank = [](const std::string& line) {
            return line.find_first_not_of(" \t\r") == std::string::npos;
        };
        while (!lines.empty() && blank(lines.back())) lines.pop_back();
        std::size_t skip = 0;
        while (skip < lines.size() && blank(lines[skip])) ++skip;
        lines.erase(lines.begin(), lines.begin() + static_cast<long>(skip));
    }

    static std::string join_lines(std::vector<std::string> lines) {
        trim_blank_edges(lines);
        std::string out;
        for (std::size_t i = 0; i < lines.size(); ++i) {
            if (i) out.push_back('\n');
            out += lines[i];
        }
        return out;
    }

    void parse(std::string_view source) {
        std::string current_section;
        std::optional<Role> current_role;
        std::vector<std::string> buffer;

        auto flush_message = [&] {
            if (!current_role) return;
            sections_[current_section].chat = true;
            sections_[current_section].messages.push_back(
                {*current_role, join_lines(std::move(buffer))});
            buffer.clear();
            current_role.reset();
        };
        auto flush_section = [&] {
            if (current_section.empty()) return;
            flush_message();
            if (!sections_[current_section].chat) {
                sections_[current_section].text = join_lines(std::move(buffer));
            }
            buffer.clear();
        };

        std::istringstream in{std::string(source)};
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (!line.empty() && line.front() == '@') {
                flush_section();
                current_section = line.substr(1);
                if (current_section.empty()) {
                    throw ConfigError("template '" + name_ + "': empty section name");
                }
                sections_[current_section];  // register even if body stays empty
                continue;
            }
            if (line == "[system]" || line == "[user]" || line == "[assistant]") {
                if (current_section.empty()) {
                    throw ConfigError("template '" + name_ + "': role marker before any section");
                }
                flush_message();
                current_role = role_from_string(line.substr(1, line.size() - 2));
                continue;
            }
            if (current_section.empty()) {
                if (line.find_first_not_of(" \t") != std::string::npos) {
                    throw ConfigError("template '" + name_ + "': content before first section");
                }
                continue;
            }
            buffer.push_back(line);
        }
        flush_section();
    }

    std::string name_;
    std::map<std::string, TemplateSection> sections_;
};

// All templates for one run, keyed "<task>_<variant>". Loads either the
// embedded defaults or every .tmpl file in an override directory.
class TemplateSet {
public:
    static TemplateSet builtin() {
        TemplateSet set;
        for (const auto& [name, source] : builtin_templates()) {
            set.add(std::string(name), source);
        }
        set.require_complete("builtin");
        return set;
    }

    static TemplateSet from_directory(const std::filesystem::path& dir) {
        if (!std::filesystem::is_directory(dir)) {
            throw ConfigError("template directory '" + dir.string() + "' does not exist");
        }
        TemplateSet set;
        for (const auto& entry : std::filesystem::directory_iterator(dir)) {
            if (entry.path().extension() != ".tmpl") continue;
            std::ifstream in(entry.path());
            std::ostringstream buffer;
            buffer << in.rdbuf();
            set.add(entry.path().stem().string(), buffer.str());
        }
        set.require_complete(dir.string());
        return set;
    }

    const Template& get(TaskKind task, PromptVariant variant) const {
        const std::string key = key_for(task, variant);
        auto it = templates_.find(key);
        if (it == templates_.end()) throw ConfigError("no template '" + key + "'");
        return it->second;
    }

    static std::string key_for(TaskKind task, PromptVariant variant) {
        return std::string(to_string(task)) + "_" + to_string(variant);
    }

private:
    void add(std::string name, std::string_view source) {
        templates_.emplace(name, Template(name, source));
    }

    void require_complete(const std::string& origin) const {
        for (auto task : {TaskKind::qa, TaskKind::nli, TaskKind::mt}) {
            for (auto variant :
                 {PromptVariant::direct, PromptVariant::follow, PromptVariant::disambig,
                  PromptVariant::selfask, PromptVariant::intentsim_question,
                  PromptVariant::intentsim_answer, PromptVariant::oracle}) {
                if (!templates_.count(key_for(task, variant))) {
                    throw ConfigError("template set from " + origin + " is missing '" +
                                      key_for(task, variant) + "'");
                }
            }
        }
    }

    std::map<std::string, Template> templates_;
};

}  // namespace clarify
