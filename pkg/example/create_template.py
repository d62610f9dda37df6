from contactmae.problem import Problem

Problem.create_template_file("template.yaml", folder="example/problems")
Problem.create_template_file("template.json", folder="example/problems")
