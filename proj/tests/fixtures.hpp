#pragma once

#include <string>
#include <vector>

#include "ragrl/retrieval.hpp"
#include "ragrl/synth_world.hpp"

namespace ragrl::test {

// Scripted replay episodes over 4-document corpora: one straight two-search
// case and one search-then-page-deeper case.
struct ReplayFixture {
  std::vector<Document> corpus;
  std::string question;
  std::vector<std::string> golds;
  std::string script;  // serialized policy output, tag grammar text
};

inline ReplayFixture jericho_fixture() {
  ReplayFixture f;
  f.corpus = {
      {"jericho", "Chris Jericho",
       "Chris Jericho is a professional wrestler musician author and actor . "
       "Jericho has released albums with his band Fozzy . Christopher Keith "
       "Irvine known as Chris Jericho grew up in Winnipeg ."},
      {"barlow", "Gary Barlow",
       "Gary Barlow is an English singer songwriter musician and record "
       "producer . Barlow has had twelve number one singles with Take That "
       "and received six Ivor Novello awards ."},
      {"fozzy", "Fozzy band",
       "Fozzy is a heavy metal band formed in 1999 fronted by a wrestler ."},
      {"takethat", "Take That",
       "Take That is an English pop group formed in Manchester in 1990 ."},
  };
  f.question =
      "What type of profession does Chris Jericho and Gary Barlow have in common ?";
  f.golds = {"musician"};
  f.script =
      "<think> I need to find the profession that Chris Jericho and Gary Barlow "
      "have in common . </think> "
      "<search> Chris Jericho and Gary Barlow common profession </search> "
      "<think> Chris Jericho is a professional wrestler musician author and "
      "actor . now I need to check Gary Barlow . </think> "
      "<search> Gary Barlow profession </search> "
      "<think> Gary Barlow is a singer songwriter musician and record producer . "
      "the common profession is musician . </think> "
      "<answer> musician </answer>";
  return f;
}

inline ReplayFixture teide_fixture() {
  ReplayFixture f;
  f.corpus = {
      {"garajonay", "Garajonay National Park",
       "Garajonay National Park is located in the center and north of the "
       "island of La Gomera one of the Canary Islands Spain . it was declared "
       "a national park in 1981 and the park is named after the rock "
       "formation of Garajonay the highest point of the island ."},
      {"teide", "Teide National Park",
       "Teide National Park is a national park located in Tenerife Canary "
       "Islands Spain . its national park status passed in 1954 making it the "
       "third oldest national park in Spain ."},
      {"palma", "La Palma island",
       "La Palma is a volcanic ocean island with steep forests and villages ."},
      {"hierro", "El Hierro island",
       "El Hierro is the smallest island of the archipelago with quiet bays ."},
  };
  f.question = "Where are Teide National Park and Garajonay National Park located ?";
  f.golds = {"Canary Islands, Spain"};
  f.script =
      "<think> I need to find out where Teide National Park and Garajonay "
      "National Park are located . </think> "
      "<search> Teide National Park and Garajonay National Park location </search> "
      "<think> Garajonay National Park is located on La Gomera in Canary Islands "
      "Spain . I need more information to learn about Teide National Park . </think> "
      "<more info> 1 </more info> "
      "<think> Teide National Park is located in Tenerife Canary Islands Spain . "
      "they are both located in Canary Islands . </think> "
      "<answer> Canary Islands , Spain </answer>";
  return f;
}

inline Vocabulary fixture_vocab(const ReplayFixture& f) {
  std::vector<std::string> texts{f.question, f.script};
  for (const std::string& g : f.golds) texts.push_back(g);
  return build_experiment_vocab(f.corpus, texts);
}

}  // namespace ragrl::test
